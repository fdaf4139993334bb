#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "sdfactor/estimator.hpp"
#include "sdfactor/simulator.hpp"

using namespace sdfactor;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

StaticParams benchmark_params(int n, std::uint64_t seed, double beta = 0.5) {
  StaticParams p;
  Rng rng(seed, 3);
  p.Lambda.resize(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) p.Lambda(i, j) = rng.uniform(0.0, 1.0);
  p.c = Eigen::Vector2d(1.0, 0.1);
  p.A = Eigen::Vector2d(0.1, 0.3).asDiagonal();
  p.B = Eigen::Vector2d(0.9, 0.7).asDiagonal();
  p.Sigma = VectorXd::Constant(n, 0.5);
  p.nu = 5.0;
  p.beta = beta;
  return p;
}

double column_correlation(const VectorXd& a, const VectorXd& b) {
  const double ca = a.mean(), cb = b.mean();
  const VectorXd da = a.array() - ca;
  const VectorXd db = b.array() - cb;
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

}  // namespace

TEST_CASE("initialization recovers the loading columns from a long panel") {
  // Signed loadings keep the true columns near orthogonal, so the principal
  // components can align with them one by one rather than only with the span.
  StaticParams truth;
  Rng rng(17, 3);
  const int n = 10;
  truth.Lambda.resize(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) truth.Lambda(i, j) = rng.uniform(-1.0, 1.0);
  truth.c = Eigen::Vector2d(1.0, 0.1);
  truth.A = Eigen::Vector2d(0.5, 0.35).asDiagonal();
  truth.B = Eigen::Vector2d(0.9, 0.8).asDiagonal();
  truth.Sigma = VectorXd::Constant(n, 0.25);
  truth.nu = 5.0;
  truth.beta = 0.5;
  const SimulatedPanel sim = sample_path(truth, 4000, 71);

  const StaticParams p0 = initialize(sim.data, LoadingRestriction::full(), 2);
  REQUIRE(p0.Lambda.rows() == 10);
  REQUIRE(p0.Lambda.cols() == 2);

  for (int j = 0; j < 2; ++j) {
    double best = 0.0;
    for (int k = 0; k < 2; ++k)
      best = std::max(best,
                      std::abs(column_correlation(p0.Lambda.col(k), truth.Lambda.col(j))));
    CHECK(best > 0.9);
  }

  CHECK(p0.c[0] == 1.0);
  CHECK(p0.A(0, 0) >= 0.01);
  CHECK(p0.A(1, 1) >= 0.01);
  CHECK(p0.Sigma.minCoeff() >= 1e-4);
  CHECK(p0.nu == 8.0);
  CHECK(p0.B(0, 0) == 0.95);
  REQUIRE_NOTHROW(run_filter(sim.data, p0));
}

TEST_CASE("initialization respects the lower triangular restriction") {
  const StaticParams truth = benchmark_params(8, 23);
  const SimulatedPanel sim = sample_path(truth, 1500, 29);
  const StaticParams p0 = initialize(sim.data, LoadingRestriction::lower_triangular(), 2);
  CHECK(p0.Lambda(0, 0) == 1.0);
  CHECK(p0.Lambda(1, 1) == 1.0);
  CHECK(p0.Lambda(0, 1) == 0.0);
  REQUIRE_NOTHROW(run_filter(sim.data, p0));
}

TEST_CASE("initialization rejects short and rank deficient panels") {
  const StaticParams truth = benchmark_params(6, 31);
  const SimulatedPanel sim = sample_path(truth, 15, 37);
  CHECK_THROWS_AS(initialize(sim.data, LoadingRestriction::full(), 2), ConstraintViolation);

  PanelData flat;
  flat.y = MatrixXd::Zero(200, 6);
  for (int t = 0; t < 200; ++t) flat.y(t, 0) = std::sin(0.1 * t);
  for (int j = 1; j < 6; ++j) flat.y.col(j) = flat.y.col(0);
  flat.labels = {"a", "b", "c", "d", "e", "f"};
  CHECK_THROWS_AS(initialize(flat, LoadingRestriction::full(), 2), RankDeficientData);
}

TEST_CASE("maximize improves on the truth start and stays near it") {
  const StaticParams truth = benchmark_params(5, 41);
  const SimulatedPanel sim = sample_path(truth, 600, 43);
  const double ll_truth = run_filter(sim.data, truth).total_loglik;

  EstimationConfig cfg;
  cfg.restriction = LoadingRestriction::full();
  cfg.n_factors = 2;
  cfg.restarts = 1;
  cfg.max_iterations = 400;
  const EstimationResult res = maximize(sim.data, cfg, &truth);

  CHECK(res.total_loglik >= ll_truth - 1e-9);
  CHECK(res.free_param_count ==
        count_free_params(LoadingRestriction::full(), 5, 2, false));
  CHECK(std::isfinite(res.total_loglik));
  REQUIRE(!res.objective_trace.empty());
  CHECK(res.objective_trace.back() == Catch::Approx(res.total_loglik));

  // The optimum reached from the truth should stay in its neighborhood.
  CHECK(std::abs(res.params.nu - truth.nu) < 2.5);
  CHECK(std::abs(res.params.B(0, 0) - 0.9) < 0.12);
  CHECK(std::abs(res.params.B(1, 1) - 0.7) < 0.25);
  CHECK(res.params.c[0] == 1.0);
}

TEST_CASE("reported likelihood matches a fresh filter run") {
  const StaticParams truth = benchmark_params(5, 47);
  const SimulatedPanel sim = sample_path(truth, 300, 53);

  EstimationConfig cfg;
  cfg.n_factors = 2;
  cfg.restarts = 1;
  cfg.max_iterations = 40;
  const EstimationResult res = maximize(sim.data, cfg, &truth);
  const double replay = run_filter(sim.data, res.params).total_loglik;
  CHECK(std::abs(res.total_loglik - replay) < 1e-10);
}

TEST_CASE("restarts are deterministic for a fixed seed") {
  const StaticParams truth = benchmark_params(5, 59);
  const SimulatedPanel sim = sample_path(truth, 250, 61);

  EstimationConfig cfg;
  cfg.n_factors = 2;
  cfg.restarts = 2;
  cfg.max_iterations = 25;
  cfg.seed = 7;
  const EstimationResult a = maximize(sim.data, cfg, &truth);
  const EstimationResult b = maximize(sim.data, cfg, &truth);
  CHECK(a.total_loglik == b.total_loglik);
  CHECK((a.params.Lambda - b.params.Lambda).cwiseAbs().maxCoeff() == 0.0);

  cfg.threads = 2;
  const EstimationResult c = maximize(sim.data, cfg, &truth);
  CHECK(a.total_loglik == c.total_loglik);
}

TEST_CASE("shared intercept tv estimation reports a replayable likelihood") {
  TvParams truth;
  const int n = 5, r = 2, m = n * r;
  truth.n_series = n;
  truth.n_factors = r;
  truth.mode = TvMode::DiagonalSharedC;
  truth.beta = 0.5;
  truth.c_l = VectorXd::Constant(m, 0.1);
  Rng rng(67, 5);
  truth.a_l.resize(m);
  for (int i = 0; i < m; ++i) truth.a_l[i] = rng.uniform(0.0, 0.5);
  truth.b_l = VectorXd::Constant(m, 0.9);
  truth.c_g = Eigen::Vector2d(1.0, 0.1);
  truth.A_g = Eigen::Vector2d(0.1, 0.3).asDiagonal();
  truth.B_g = Eigen::Vector2d(0.9, 0.7).asDiagonal();
  truth.Sigma = VectorXd::Constant(n, 0.5);
  truth.nu = 5.0;

  VectorXd l0(m);
  for (int i = 0; i < m; ++i) l0[i] = rng.uniform(0.0, 1.0);
  const SimulatedTvPanel sim = sample_tv_path(truth, 400, 71, kDefaultBurnIn, 0, l0);

  EstimationConfig cfg;
  cfg.n_factors = 2;
  cfg.restarts = 1;
  cfg.max_iterations = 30;
  const TvEstimationResult res = maximize_tv(sim.data, cfg, &truth);

  CHECK(std::isfinite(res.total_loglik));
  CHECK(res.free_param_count == 1 + 2 * m + (r - 1) + 2 * r + n + 1);
  REQUIRE(res.l_init.size() == m);

  const VectorXd g0 =
      default_init(res.params.frozen_at(res.l_init, VectorXd()));
  const double replay = run_tv_filter(sim.data, res.params, res.l_init, g0).total_loglik;
  CHECK(std::abs(res.total_loglik - replay) < 1e-10);
}

TEST_CASE("targeted tv estimation nests the static fit") {
  const StaticParams truth = benchmark_params(5, 73);
  const SimulatedPanel sim = sample_path(truth, 350, 79);

  EstimationConfig cfg;
  cfg.n_factors = 2;
  cfg.restarts = 1;
  cfg.max_iterations = 30;
  const TvEstimationResult res = estimate_tv_targeted(sim.data, cfg);

  CHECK(std::isfinite(res.total_loglik));
  CHECK(res.params.mode == TvMode::ScalarTargeted);
  CHECK(res.free_param_count ==
        count_free_params(LoadingRestriction::full(), 5, 2, false) + 2);
  CHECK(res.params.c_g[0] == 1.0);

  const double replay = run_tv_filter(sim.data, res.params).total_loglik;
  CHECK(std::abs(res.total_loglik - replay) < 1e-10);
}
