#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "sdfactor/matops.hpp"

using namespace sdfactor;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_spd(int n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = nd(gen);
  MatrixXd m = g * g.transpose() + 0.5 * MatrixXd::Identity(n, n);
  return ((m + m.transpose()) * 0.5).eval();
}

}  // namespace

TEST_CASE("SymPosDef rejects non-square and asymmetric input") {
  CHECK_THROWS_AS(SymPosDef(MatrixXd::Zero(2, 3)), DimensionMismatch);
  MatrixXd m(2, 2);
  m << 1.0, 0.3, 0.3 + 1e-6, 2.0;
  CHECK_THROWS_AS(SymPosDef(m), ConstraintViolation);
  m(1, 0) = 0.3 + 1e-12;  // inside tolerance
  CHECK_NOTHROW(SymPosDef(m));
}

TEST_CASE("sym_power exact exponents") {
  const MatrixXd m = random_spd(4, 11);
  const SymPosDef spd(m);
  CHECK(sym_power(spd, 1.0).isApprox(m, 0.0));  // bit-identical
  CHECK(sym_power(spd, 0.0).isIdentity(0.0));
  const MatrixXd inv = sym_power(spd, -1.0);
  CHECK((inv * m).isApprox(MatrixXd::Identity(4, 4), 1e-12));
  const MatrixXd h = sym_power(spd, 0.5);
  CHECK((h * h).isApprox(m, 1e-12));
  const MatrixXd hinv = sym_power(spd, -0.5);
  CHECK((hinv * m * hinv).isApprox(MatrixXd::Identity(4, 4), 1e-12));
}

TEST_CASE("sym_power composes like real exponents") {
  const MatrixXd m = random_spd(5, 7);
  const SymPosDef spd(m);
  const MatrixXd a = sym_power(spd, 0.3);
  const MatrixXd b = sym_power(spd, 0.7);
  CHECK((a * b).isApprox(m, 1e-11));
  const MatrixXd c = sym_power(spd, -0.25);
  const MatrixXd d = sym_power(spd, 0.25);
  CHECK((c * d).isApprox(MatrixXd::Identity(5, 5), 1e-12));
}

TEST_CASE("sym_power output is symmetric") {
  const MatrixXd m = random_spd(6, 23);
  const MatrixXd p = sym_power(SymPosDef(m), -0.5);
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sym_power diagonal case matches scalar powers") {
  MatrixXd m = MatrixXd::Zero(3, 3);
  m.diagonal() << 4.0, 9.0, 0.25;
  const MatrixXd h = sym_power(SymPosDef(m), -0.5);
  CHECK(h(0, 0) == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(h(1, 1) == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(h(2, 2) == Catch::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("sym_power rejects semidefinite input") {
  MatrixXd m = MatrixXd::Zero(2, 2);
  m(0, 0) = 1.0;  // rank one
  try {
    sym_power(SymPosDef(m), -0.5);
    FAIL("expected EigenvalueBelowFloor");
  } catch (const EigenvalueBelowFloor& e) {
    CHECK(e.index == 0);
    CHECK(std::abs(e.value) <= 1e-12);
  }
  MatrixXd neg(2, 2);
  neg << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(sym_power(SymPosDef(neg), 0.5), EigenvalueBelowFloor);
}

TEST_CASE("permutation matrix semantics and parity") {
  const std::vector<int> perm{2, 0, 1};
  const MatrixXd p = permutation_matrix(perm);
  VectorXd x(3);
  x << 10.0, 20.0, 30.0;
  const VectorXd px = p * x;
  CHECK(px[0] == 30.0);
  CHECK(px[1] == 10.0);
  CHECK(px[2] == 20.0);
  CHECK(permutation_parity(perm) == 1);  // 3-cycle is even
  CHECK(p.determinant() == Catch::Approx(1.0).epsilon(1e-14));

  const std::vector<int> swap{1, 0, 2};
  CHECK(permutation_parity(swap) == -1);
  CHECK(permutation_matrix(swap).determinant() == Catch::Approx(-1.0).epsilon(1e-14));

  CHECK(permutation_matrix({0, 1, 2}).isIdentity(0.0));
}

TEST_CASE("invalid permutations are rejected") {
  CHECK_THROWS_AS(permutation_matrix({0, 0, 1}), InvalidPermutation);
  CHECK_THROWS_AS(permutation_matrix({0, 3, 1}), InvalidPermutation);
  CHECK_THROWS_AS(permutation_parity({1, 1}), InvalidPermutation);
}

TEST_CASE("permutation conjugation relabels a symmetric matrix") {
  const MatrixXd m = random_spd(3, 5);
  const std::vector<int> perm{2, 0, 1};
  const MatrixXd p = permutation_matrix(perm);
  const MatrixXd conj = p * m * p.transpose();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(conj(i, j) == m(perm[i], perm[j]));
}
