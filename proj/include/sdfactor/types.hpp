#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sdfactor/errors.hpp"

namespace sdfactor {

// Parameters of the static-loading model
//   y_t = Lambda f_t + eps_t,   eps_t ~ t_nu(0, diag(Sigma)),
//   f_{t+1} = c + A s_t + B f_t,
// where s_t is the scaled score of the conditional density.
struct StaticParams {
  Eigen::VectorXd c;       // r
  Eigen::MatrixXd A;       // r x r
  Eigen::MatrixXd B;       // r x r
  Eigen::MatrixXd Lambda;  // n x r
  Eigen::VectorXd Sigma;   // n, observation variances
  double nu = 0.0;         // degrees of freedom, > 2
  double beta = 0.5;       // score-scaling exponent in [0, 1]

  Eigen::Index n() const { return Lambda.rows(); }
  Eigen::Index r() const { return Lambda.cols(); }

  void validate() const {
    const Eigen::Index rr = r(), nn = n();
    if (nn < 1 || rr < 1 || nn < rr)
      throw IncompatibleShape("need n >= r >= 1");
    if (c.size() != rr || A.rows() != rr || A.cols() != rr || B.rows() != rr || B.cols() != rr)
      throw DimensionMismatch("c, A, B must match the factor dimension");
    if (Sigma.size() != nn)
      throw DimensionMismatch("Sigma must have one variance per series");
    if (!(nu > 2.0))
      throw ConstraintViolation("nu must exceed 2");
    if ((Sigma.array() <= 0.0).any())
      throw ConstraintViolation("Sigma entries must be positive");
    if (!(beta >= 0.0 && beta <= 1.0))
      throw ConstraintViolation("beta must lie in [0, 1]");
    auto finite = [](const Eigen::MatrixXd& m) { return m.allFinite(); };
    if (!finite(c) || !finite(A) || !finite(B) || !finite(Lambda) || !finite(Sigma))
      throw NonFiniteState("parameters contain non-finite entries");
  }

  // The normalization used for estimation: A diagonal with nonzero diagonal
  // and the first intercept pinned at one.
  void check_identified(double tol = 1e-12) const {
    validate();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      for (Eigen::Index j = 0; j < A.cols(); ++j)
        if (i != j && std::abs(A(i, j)) > tol)
          throw ConstraintViolation("identified form requires diagonal A");
    if ((A.diagonal().cwiseAbs().array() <= tol).any())
      throw ConstraintViolation("identified form requires nonzero diagonal of A");
    if (std::abs(c[0] - 1.0) > tol)
      throw ConstraintViolation("identified form requires c_1 = 1");
  }
};

struct FilterOutput {
  Eigen::MatrixXd factors;        // T x r, predicted f_t
  Eigen::MatrixXd scaled_scores;  // T x r, s_t
  Eigen::VectorXd loglik_contribs;  // T
  double total_loglik = 0.0;
  Eigen::VectorXd next_factor;    // f_{T+1}
};

struct PanelData {
  Eigen::MatrixXd y;                // T x n
  std::vector<std::string> labels;  // n
  std::vector<std::string> dates;   // empty or T
  bool standardized = false;
  Eigen::VectorXd means;  // recorded when standardized
  Eigen::VectorXd sds;

  Eigen::Index T() const { return y.rows(); }
  Eigen::Index n() const { return y.cols(); }

  void validate() const {
    if (y.rows() < 2)
      throw IncompatibleShape("panel needs at least two observations");
    if (!y.allFinite())
      throw NonFiniteState("panel contains non-finite values");
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != y.cols())
      throw IncompatibleShape("one label per series required");
    if (!dates.empty() && static_cast<Eigen::Index>(dates.size()) != y.rows())
      throw IncompatibleShape("one date per row required");
  }

  PanelData standardize() const {
    validate();
    PanelData out = *this;
    const double t = static_cast<double>(y.rows());
    out.means = y.colwise().mean();
    Eigen::MatrixXd centered = y.rowwise() - out.means.transpose();
    out.sds = (centered.array().square().colwise().sum() / (t - 1.0)).sqrt();
    if ((out.sds.array() <= 0.0).any())
      throw RankDeficientData("constant series cannot be standardized");
    out.y = centered.array().rowwise() / out.sds.transpose().array();
    out.standardized = true;
    return out;
  }
};

}  // namespace sdfactor
