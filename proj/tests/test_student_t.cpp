#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "sdfactor/student_t.hpp"

using namespace sdfactor;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// n = 3, r = 2 reference parameter set shared by the frozen-value checks.
StaticParams case32() {
  StaticParams p;
  p.Lambda.resize(3, 2);
  p.Lambda << 0.9, 0.1, 0.4, 0.7, -0.3, 1.1;
  p.Sigma.resize(3);
  p.Sigma << 0.5, 1.5, 0.8;
  p.nu = 6.5;
  p.c = VectorXd::Zero(2);
  p.A = MatrixXd::Identity(2, 2);
  p.B = MatrixXd::Zero(2, 2);
  p.beta = 0.5;
  return p;
}

StaticParams scalar_case() {
  StaticParams p;
  p.Lambda = MatrixXd::Ones(1, 1);
  p.Sigma = VectorXd::Ones(1);
  p.nu = 5.0;
  p.c = VectorXd::Zero(1);
  p.A = MatrixXd::Identity(1, 1);
  p.B = MatrixXd::Zero(1, 1);
  return p;
}

}  // namespace

TEST_CASE("log-density frozen values") {
  // Values computed with 30-digit arithmetic from the closed form.
  const StaticParams p1 = scalar_case();
  CHECK(student_t_logdensity(VectorXd::Zero(1), VectorXd::Zero(1), p1) ==
        Catch::Approx(-0.71320677717172878298).epsilon(1e-14));

  const StaticParams p2 = case32();
  VectorXd y(3), f(2);
  y << 0.3, -1.2, 2.0;
  f << 0.5, -0.25;
  CHECK(student_t_logdensity(y, f, p2) ==
        Catch::Approx(-6.8410233416349871535).epsilon(1e-14));
}

TEST_CASE("log-density is a proper density in one dimension") {
  // Trapezoid integral of exp(logdensity) over a wide grid.
  const StaticParams p = scalar_case();
  const double lo = -60.0, hi = 60.0;
  const int m = 400000;
  const double h = (hi - lo) / m;
  double total = 0.0;
  VectorXd y(1), f0 = VectorXd::Zero(1);
  for (int i = 0; i <= m; ++i) {
    y[0] = lo + h * i;
    const double v = std::exp(student_t_logdensity(y, f0, p));
    total += (i == 0 || i == m) ? 0.5 * v : v;
  }
  total *= h;
  CHECK(total == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("score frozen values and finite differences") {
  const StaticParams p = case32();
  VectorXd y(3), f(2);
  y << 0.3, -1.2, 2.0;
  f << 0.5, -0.25;
  const VectorXd g = score(y, f, p);
  CHECK(g[0] == Catch::Approx(-1.0774268930190059957).epsilon(1e-13));
  CHECK(g[1] == Catch::Approx(2.0188887496310791088).epsilon(1e-13));

  // Central differences of the log-density, step 1e-6.
  for (int j = 0; j < 2; ++j) {
    VectorXd fp = f, fm = f;
    fp[j] += 1e-6;
    fm[j] -= 1e-6;
    const double fd =
        (student_t_logdensity(y, fp, p) - student_t_logdensity(y, fm, p)) / 2e-6;
    CHECK(g[j] == Catch::Approx(fd).margin(1e-7));
  }
}

TEST_CASE("score finite differences across random points") {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> nd;
  const StaticParams p = case32();
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd y(3), f(2);
    for (int i = 0; i < 3; ++i) y[i] = 2.0 * nd(gen);
    for (int j = 0; j < 2; ++j) f[j] = nd(gen);
    const VectorXd g = score(y, f, p);
    for (int j = 0; j < 2; ++j) {
      VectorXd fp = f, fm = f;
      fp[j] += 1e-6;
      fm[j] -= 1e-6;
      const double fd =
          (student_t_logdensity(y, fp, p) - student_t_logdensity(y, fm, p)) / 2e-6;
      CHECK(g[j] == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("score is redescending in the tails") {
  const StaticParams p = scalar_case();
  VectorXd f0 = VectorXd::Zero(1), y(1);
  y << 3.0;
  const double near = score(y, f0, p)[0];
  y << 300.0;
  const double far = score(y, f0, p)[0];
  CHECK(std::abs(far) < std::abs(near));
  // The score at |y| -> inf behaves like (nu+n)/y.
  CHECK(far == Catch::Approx((p.nu + 1.0) / 300.0).epsilon(1e-2));
}

TEST_CASE("fisher information frozen constants") {
  // Exact second moment of the score: (nu+n) nu / ((nu-2)(nu+n+2)) Lambda' S^-1 Lambda.
  const StaticParams p1 = scalar_case();
  CHECK(fisher_information(p1).matrix()(0, 0) == Catch::Approx(1.25).epsilon(1e-14));

  const StaticParams p2 = case32();
  const double k = 1.1932367149758454106;  // (nu+n) nu / ((nu-2)(nu+n+2)) at nu=6.5, n=3
  const MatrixXd expected =
      k * (p2.Lambda.transpose() * p2.Sigma.cwiseInverse().asDiagonal() * p2.Lambda);
  CHECK(fisher_information(p2).matrix().isApprox(expected, 1e-13));
}

TEST_CASE("fisher information approaches the gaussian limit") {
  StaticParams p = scalar_case();
  p.nu = 1e8;
  CHECK(fisher_information(p).matrix()(0, 0) == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fisher information matches the monte carlo score second moment") {
  // Draw y from the density by the scale-mixture construction and average
  // grad grad'. Also documents that the moment carries the (nu+n)/(nu-2)
  // factor relative to nu/(nu+n+2) Lambda' S^-1 Lambda.
  const StaticParams p = case32();
  const int draws = 200000;
  std::mt19937_64 gen(1234);
  std::normal_distribution<double> nd;
  std::chi_squared_distribution<double> chi(p.nu);
  const VectorXd f0 = VectorXd::Zero(2);
  MatrixXd acc = MatrixXd::Zero(2, 2);
  for (int d = 0; d < draws; ++d) {
    const double u = chi(gen);
    const double mix = std::sqrt((p.nu - 2.0) / u);
    VectorXd y(3);
    for (int i = 0; i < 3; ++i) y[i] = mix * std::sqrt(p.Sigma[i]) * nd(gen);
    const VectorXd g = score(y, f0, p);
    acc.noalias() += g * g.transpose();
  }
  acc /= draws;
  const MatrixXd info = fisher_information(p).matrix();
  CHECK(acc.isApprox(info, 0.02));
  const double naive = p.nu / (p.nu + 3.0 + 2.0);  // misses the heavy-tail factor
  CHECK(acc(0, 0) / (info(0, 0) / ((p.nu + 3.0) * p.nu / ((p.nu - 2.0) * (p.nu + 5.0))) * naive) ==
        Catch::Approx((p.nu + 3.0) / (p.nu - 2.0)).epsilon(0.03));
}

TEST_CASE("dimension checks throw") {
  const StaticParams p = case32();
  CHECK_THROWS_AS(student_t_logdensity(VectorXd::Zero(2), VectorXd::Zero(2), p),
                  DimensionMismatch);
  CHECK_THROWS_AS(score(VectorXd::Zero(3), VectorXd::Zero(3), p), DimensionMismatch);
}
