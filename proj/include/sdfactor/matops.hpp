#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "sdfactor/errors.hpp"

namespace sdfactor {

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kEigenvalueFloor = 1e-10;  // relative to the largest eigenvalue

// A square matrix certified symmetric at construction. Positive definiteness is
// enforced lazily by sym_power, which is the only consumer that needs it.
class SymPosDef {
 public:
  explicit SymPosDef(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols())
      throw DimensionMismatch("SymPosDef requires a square matrix");
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol)
      throw ConstraintViolation("matrix not symmetric: max asymmetry " + std::to_string(asym));
    m_ = ((m_ + m_.transpose()) * 0.5).eval();
  }

  const Eigen::MatrixXd& matrix() const { return m_; }
  Eigen::Index size() const { return m_.rows(); }

 private:
  Eigen::MatrixXd m_;
};

// M^p through the spectral decomposition, with exact handling of the common
// exponents so that p = 1 returns the input bit-for-bit and p = 0 the identity.
inline Eigen::MatrixXd sym_power(const SymPosDef& m, double p) {
  const Eigen::MatrixXd& a = m.matrix();
  if (p == 1.0) return a;
  if (p == 0.0) return Eigen::MatrixXd::Identity(a.rows(), a.cols());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  if (a.rows() <= 3)
    es.computeDirect(a);
  else
    es.compute(a);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double floor = kEigenvalueFloor * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam[i] < floor) throw EigenvalueBelowFloor(static_cast<int>(i), lam[i]);

  Eigen::VectorXd powered(lam.size());
  if (p == -1.0)
    powered = lam.cwiseInverse();
  else if (p == 0.5)
    powered = lam.cwiseSqrt();
  else if (p == -0.5)
    powered = lam.cwiseSqrt().cwiseInverse();
  else
    powered = lam.array().pow(p);

  Eigen::MatrixXd r = es.eigenvectors() * powered.asDiagonal() * es.eigenvectors().transpose();
  return ((r + r.transpose()) * 0.5).eval();
}

// Permutation matrix P with (P x)[i] = x[perm[i]].
inline Eigen::MatrixXd permutation_matrix(const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  std::vector<char> seen(n, 0);
  for (int v : perm) {
    if (v < 0 || v >= n || seen[v])
      throw InvalidPermutation("indices must form a permutation of 0.." + std::to_string(n - 1));
    seen[v] = 1;
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) p(i, perm[i]) = 1.0;
  return p;
}

// Sign of a permutation (+1 even, -1 odd), which is also det(permutation_matrix).
inline int permutation_parity(const std::vector<int>& perm) {
  const int n = static_cast<int>(perm.size());
  std::vector<char> seen(n, 0);
  for (int v : perm) {
    if (v < 0 || v >= n || seen[v])
      throw InvalidPermutation("indices must form a permutation of 0.." + std::to_string(n - 1));
    seen[v] = 1;
  }
  std::vector<char> visited(n, 0);
  int parity = 1;
  for (int i = 0; i < n; ++i) {
    if (visited[i]) continue;
    int len = 0;
    for (int j = i; !visited[j]; j = perm[j]) {
      visited[j] = 1;
      ++len;
    }
    if (len % 2 == 0) parity = -parity;
  }
  return parity;
}

}  // namespace sdfactor
