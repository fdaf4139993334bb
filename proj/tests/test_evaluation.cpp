#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "sdfactor/evaluation.hpp"
#include "sdfactor/simulator.hpp"

using namespace sdfactor;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

StaticParams two_factor_dgp(int n, std::uint64_t seed) {
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
  p.beta = 0.5;
  return p;
}

}  // namespace

TEST_CASE("information criteria reproduce the published arithmetic") {
  const auto [aic1, bic1] = information_criteria(-3924.19, 19, 524);
  CHECK(round2(aic1) == 15.05);
  CHECK(round2(bic1) == 15.20);

  // Three factors on eight series with one shared persistence coefficient.
  CHECK(count_free_params(LoadingRestriction::full(), 8, 3, true) == 39);
  const auto [aic3, bic3] = information_criteria(-2755.02, 39, 524);
  CHECK(round2(aic3) == 10.66);

  const auto [aic0, bic0] = information_criteria(0.0, 0, 524);
  CHECK(aic0 == 0.0);
  CHECK(bic0 == 0.0);

  CHECK_THROWS_AS(information_criteria(-1.0, 3, 0), ConstraintViolation);
  CHECK_THROWS_AS(information_criteria(-1.0, -1, 10), ConstraintViolation);

  const ComparisonRow row = make_comparison_row("1F Full", -3924.19, 19, 524);
  CHECK(row.label == "1F Full");
  CHECK(round2(row.aic) == 15.05);
  CHECK(round2(row.bic) == 15.20);
}

TEST_CASE("likelihood ratio test matches the chi-square tail") {
  const LrResult big = lr_test(0.0, 58.01, 5);
  CHECK(big.statistic == Catch::Approx(116.02));
  CHECK(big.p_value < 0.01);

  const LrResult zero = lr_test(-10.0, -10.0, 3);
  CHECK(zero.statistic == 0.0);
  CHECK(zero.p_value == 1.0);

  const LrResult borderline = lr_test(0.0, 3.8415 / 2.0, 1);
  CHECK(std::abs(borderline.p_value - 0.05) < 1e-3);

  CHECK_THROWS_AS(lr_test(5.0, 1.0, 2), NestingViolation);
  CHECK_THROWS_AS(lr_test(0.0, 1.0, 0), ConstraintViolation);
  CHECK_NOTHROW(lr_test(1.0, 1.0 - 1e-8, 1));
}

TEST_CASE("in-sample mse endpoints") {
  const int n = 4;
  StaticParams p;
  p.Lambda = MatrixXd::Constant(n, 1, 0.7);
  p.c = VectorXd::Constant(1, 2.0);
  p.A = MatrixXd::Zero(1, 1);
  p.B = MatrixXd::Zero(1, 1);
  p.Sigma = VectorXd::Constant(n, 0.3);
  p.nu = 7.0;
  p.beta = 0.0;

  PanelData constant;
  constant.y = MatrixXd::Zero(50, n);
  constant.y.rowwise() = (p.Lambda * p.c).transpose().eval();
  constant.labels = {"a", "b", "c", "d"};
  CHECK(insample_mse(constant, p) == 0.0);

  // Zero loadings make the prediction zero, so the loss is the raw second
  // moment; identity score scaling keeps the filter defined.
  StaticParams flat = p;
  flat.Lambda = MatrixXd::Zero(n, 1);
  PanelData noise;
  Rng rng(11, 2);
  noise.y.resize(60, n);
  for (int t = 0; t < 60; ++t)
    for (int i = 0; i < n; ++i) noise.y(t, i) = rng.uniform(-1.0, 1.0);
  noise.labels = constant.labels;
  const double mse = insample_mse(noise, flat);
  CHECK(mse == Catch::Approx(noise.y.squaredNorm() / (60.0 * n)).epsilon(1e-12));
}

TEST_CASE("nested pair keeps the likelihood ordering") {
  const StaticParams truth = two_factor_dgp(5, 83);
  const SimulatedPanel sim = sample_path(truth, 300, 89);

  EstimationConfig lt_cfg;
  lt_cfg.restriction = LoadingRestriction::lower_triangular();
  lt_cfg.n_factors = 2;
  lt_cfg.restarts = 1;
  lt_cfg.max_iterations = 120;
  EstimationConfig full_cfg = lt_cfg;
  full_cfg.restriction = LoadingRestriction::full();

  const NestedFit fit = fit_nested_pair(sim.data, lt_cfg, full_cfg);
  CHECK(fit.full.total_loglik >= fit.restricted.total_loglik - 1e-7);
  CHECK(fit.lr.df == 2);
  CHECK(fit.lr.statistic >= 0.0);
  CHECK(fit.lr.p_value <= 1.0);

  EstimationConfig wrong = full_cfg;
  wrong.n_factors = 1;
  CHECK_THROWS_AS(fit_nested_pair(sim.data, lt_cfg, wrong), NestingViolation);
}

TEST_CASE("rolling forecast emits one row per origin") {
  const StaticParams truth = two_factor_dgp(5, 97);
  const SimulatedPanel sim = sample_path(truth, 90, 101);

  EstimationConfig cfg;
  cfg.n_factors = 2;
  cfg.restarts = 1;
  cfg.max_iterations = 60;
  const RollingForecast fc = rolling_forecast(sim.data, cfg, 70);
  CHECK(fc.forecasts.rows() == 20);
  CHECK(fc.forecasts.cols() == 5);
  CHECK(fc.actuals.rows() == 20);
  CHECK(fc.failed_origins.empty());
  CHECK(std::isfinite(fc.mse));
  for (Eigen::Index h = 0; h < 20; ++h)
    CHECK((fc.actuals.row(h) - sim.data.y.row(70 + h)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(rolling_forecast(sim.data, cfg, 90), ConstraintViolation);
  CHECK_THROWS_AS(rolling_forecast(sim.data, cfg, 15), ConstraintViolation);
}

TEST_CASE("fixed model on constant data forecasts the constant") {
  const int n = 3;
  StaticParams p;
  p.Lambda = MatrixXd::Constant(n, 1, 1.1);
  p.c = VectorXd::Constant(1, 0.5);
  p.A = MatrixXd::Zero(1, 1);
  p.B = MatrixXd::Zero(1, 1);
  p.Sigma = VectorXd::Constant(n, 0.2);
  p.nu = 6.0;
  p.beta = 0.0;

  PanelData data;
  data.y = MatrixXd::Zero(40, n);
  data.y.rowwise() = (p.Lambda * p.c).transpose().eval();
  data.labels = {"a", "b", "c"};

  EstimationConfig cfg;
  cfg.n_factors = 1;
  const RollingForecast fc = rolling_forecast(data, cfg, 25, false, &p);
  CHECK(fc.forecasts.rows() == 15);
  CHECK(fc.mse == 0.0);
  for (Eigen::Index h = 0; h < 15; ++h)
    CHECK((fc.forecasts.row(h).transpose() - p.Lambda * p.c).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("forecasts never read past their origin") {
  const StaticParams truth = two_factor_dgp(4, 103);
  const SimulatedPanel sim = sample_path(truth, 80, 107);

  EstimationConfig cfg;
  cfg.n_factors = 2;
  cfg.restarts = 1;
  cfg.max_iterations = 50;
  const RollingForecast base = rolling_forecast(sim.data, cfg, 60);

  PanelData bumped = sim.data;
  bumped.y.row(70).array() += 5.0;
  const RollingForecast pert = rolling_forecast(bumped, cfg, 60);

  // Row h predicts observation 60 + h. The bump sits at row 70, so every
  // forecast made at an origin before 70, including the one for row 70
  // itself, must be bit-identical.
  for (Eigen::Index h = 0; h <= 10; ++h)
    CHECK((base.forecasts.row(h) - pert.forecasts.row(h)).cwiseAbs().maxCoeff() == 0.0);
}
