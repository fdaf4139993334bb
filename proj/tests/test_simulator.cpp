#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "sdfactor/simulator.hpp"

using namespace sdfactor;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// The 5-series, 2-factor design used across the simulation tests.
StaticParams design52(std::uint64_t lambda_seed = 1) {
  StaticParams p;
  p.c = Eigen::Vector2d(1.0, 0.1);
  p.A = Eigen::Vector2d(0.1, 0.3).asDiagonal();
  p.B = Eigen::Vector2d(0.9, 0.7).asDiagonal();
  p.Sigma = VectorXd::Constant(5, 0.5);
  p.nu = 5.0;
  p.beta = 0.5;
  p.Lambda.resize(5, 2);
  Rng rng(lambda_seed, 101);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) p.Lambda(i, j) = rng.uniform01();
  return p;
}

double correlation(const VectorXd& a, const VectorXd& b) {
  const VectorXd da = a.array() - a.mean();
  const VectorXd db = b.array() - b.mean();
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

}  // namespace

TEST_CASE("simulated panel has the requested shape and labels") {
  const StaticParams p = design52();
  const SimulatedPanel sim = sample_path(p, 300, 42);
  CHECK(sim.data.T() == 300);
  CHECK(sim.data.n() == 5);
  CHECK(sim.factors.rows() == 300);
  CHECK(sim.factors.cols() == 2);
  CHECK(sim.data.labels.size() == 5);
  CHECK(sim.data.labels[0] == "s1");
  CHECK(sim.data.labels[4] == "s5");
  CHECK(sim.data.y.allFinite());
}

TEST_CASE("same seed reproduces the panel, other seeds and streams do not") {
  const StaticParams p = design52();
  const SimulatedPanel a = sample_path(p, 200, 7);
  const SimulatedPanel b = sample_path(p, 200, 7);
  CHECK(a.data.y.isApprox(b.data.y, 0.0));
  CHECK(a.factors.isApprox(b.factors, 0.0));

  const SimulatedPanel c = sample_path(p, 200, 8);
  CHECK_FALSE(a.data.y.isApprox(c.data.y, 1e-12));
  const SimulatedPanel d = sample_path(p, 200, 7, kDefaultBurnIn, 1);
  CHECK_FALSE(a.data.y.isApprox(d.data.y, 1e-12));
}

TEST_CASE("pinned factors expose the raw observation noise") {
  StaticParams p = design52();
  p.c = VectorXd::Zero(2);
  p.A = MatrixXd::Zero(2, 2);
  p.B = MatrixXd::Zero(2, 2);
  const Eigen::Index T = 200000;
  const SimulatedPanel sim = sample_path(p, T, 3);

  // Factors stay at the fixed point zero, so y is pure t noise with the
  // requested variance and the heavy-tail kurtosis 3(nu-2)/(nu-4) = 9.
  CHECK(sim.factors.cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 5; ++i) {
    const VectorXd col = sim.data.y.col(i);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (T - 1.0);
    CHECK(mean == Catch::Approx(0.0).margin(0.02));
    CHECK(var == Catch::Approx(0.5).epsilon(0.05));
    const double m4 = (col.array() - mean).pow(4).sum() / T;
    CHECK(m4 / (var * var) == Catch::Approx(9.0).epsilon(0.25));
  }

  // Common mixing makes squared observations co-move but levels stay
  // uncorrelated.
  const VectorXd y0 = sim.data.y.col(0), y1 = sim.data.y.col(1);
  CHECK(correlation(y0, y1) == Catch::Approx(0.0).margin(0.02));
  CHECK(correlation(y0.array().square(), y1.array().square()) > 0.05);
}

TEST_CASE("filter run at the true parameters recovers the simulated factors") {
  const StaticParams p = design52();
  const SimulatedPanel sim = sample_path(p, 1000, 11);
  const FilterOutput out = run_filter(sim.data, p);
  for (int j = 0; j < 2; ++j) {
    CHECK(correlation(out.factors.col(j), sim.factors.col(j)) > 0.99);
    // Once the start-up transient has decayed the paths coincide.
    CHECK(correlation(out.factors.col(j).tail(900), sim.factors.col(j).tail(900)) > 0.999);
  }
}

TEST_CASE("burn-in discards the transient") {
  StaticParams p = design52();
  const SimulatedPanel cold = sample_path(p, 300, 5, 0);
  const SimulatedPanel warm = sample_path(p, 300, 5, 200);
  // Same seed, different horizon offsets: the paths must differ.
  CHECK_FALSE(cold.data.y.isApprox(warm.data.y, 1e-12));
  // The warm path starts near the stationary region rather than at the
  // deterministic fixed point.
  CHECK(cold.factors(0, 0) == Catch::Approx(10.0).epsilon(1e-12));
  CHECK(warm.factors.col(0).minCoeff() < 10.5);
  CHECK(warm.factors.col(0).maxCoeff() > 9.5);
}

TEST_CASE("invalid simulation arguments throw") {
  const StaticParams p = design52();
  CHECK_THROWS_AS(sample_path(p, 1, 1), IncompatibleShape);
  CHECK_THROWS_AS(sample_path(p, 100, 1, -2), ConstraintViolation);
  StaticParams bad = p;
  bad.nu = 1.5;
  CHECK_THROWS_AS(sample_path(bad, 100, 1), ConstraintViolation);
}

TEST_CASE("tv simulation produces moving loadings that the tv filter tracks") {
  TvParams p;
  p.n_series = 5;
  p.n_factors = 2;
  p.c_l = VectorXd::Constant(10, 0.1);
  {
    Rng rng(77, 55);
    p.a_l.resize(10);
    for (int i = 0; i < 10; ++i) p.a_l[i] = rng.uniform(0.0, 0.5);
  }
  p.b_l = VectorXd::Constant(10, 0.9);
  p.c_g = Eigen::Vector2d(1.0, 0.1);
  p.A_g = Eigen::Vector2d(0.1, 0.3).asDiagonal();
  p.B_g = Eigen::Vector2d(0.9, 0.7).asDiagonal();
  p.Sigma = VectorXd::Constant(5, 0.5);
  p.nu = 5.0;
  p.beta = 0.5;

  // The shared intercept and decay make the loading fixed point rank one, so
  // the path starts from drawn loadings and burn-in washes out the transient.
  VectorXd l0(10);
  {
    Rng rng(77, 56);
    for (int i = 0; i < 10; ++i) l0[i] = rng.uniform01();
  }
  const SimulatedTvPanel sim = sample_tv_path(p, 800, 21, kDefaultBurnIn, 0, l0);
  CHECK(sim.data.T() == 800);
  CHECK(sim.loadings.rows() == 800);
  CHECK(sim.loadings.cols() == 10);

  // Loadings genuinely vary.
  for (int k = 0; k < 10; ++k) {
    const VectorXd path = sim.loadings.col(k);
    CHECK((path.maxCoeff() - path.minCoeff()) > 0.05);
  }

  const SimulatedTvPanel again = sample_tv_path(p, 800, 21, kDefaultBurnIn, 0, l0);
  CHECK(sim.data.y.isApprox(again.data.y, 0.0));

  // From the true initial state the filter retraces the generated path over a
  // short horizon. Agreement cannot extend further: the loading recursion at
  // these parameter values separates nearby trajectories rapidly (the factor
  // level near ten multiplies the identity-scaled score), so the rounding gap
  // between the stored disturbances and the recomputed residuals grows by
  // orders of magnitude per step. The redescending score keeps both paths
  // bounded rather than letting them converge.
  const TvFilterOutput exact = run_tv_filter(sim.data, p, sim.loadings.row(0).transpose(),
                                             sim.factors.row(0).transpose());
  CHECK(exact.loadings.row(0).isApprox(sim.loadings.row(0), 0.0));
  for (int t = 1; t < 5; ++t) {
    CHECK((exact.loadings.row(t) - sim.loadings.row(t)).cwiseAbs().maxCoeff() < 1e-4);
    CHECK((exact.factors.row(t) - sim.factors.row(t)).cwiseAbs().maxCoeff() < 1e-4);
  }

  // Whole paths stay bounded for both the generator and the filter, and the
  // filter from a perturbed start remains finite as well.
  CHECK(sim.loadings.cwiseAbs().maxCoeff() < 1e3);
  CHECK(exact.loadings.cwiseAbs().maxCoeff() < 1e3);
  CHECK(exact.factors.cwiseAbs().maxCoeff() < 1e3);
  CHECK(std::isfinite(exact.total_loglik));

  VectorXd l_start = sim.loadings.row(0).transpose();
  {
    Rng rng(99, 1);
    for (int i = 0; i < 10; ++i) l_start[i] += rng.uniform(-0.02, 0.02);
  }
  const TvFilterOutput out =
      run_tv_filter(sim.data, p, l_start, sim.factors.row(0).transpose());
  CHECK(out.loadings.cwiseAbs().maxCoeff() < 1e3);
  CHECK(std::isfinite(out.total_loglik));
}
