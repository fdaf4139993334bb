#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "sdfactor/matops.hpp"
#include "sdfactor/types.hpp"

namespace sdfactor {

// Multivariate Student-t observation density parameterized by its covariance
// matrix diag(Sigma), so the variance of each series is Sigma_i for any nu > 2:
//   log p(y | f) = lgamma((nu+n)/2) - lgamma(nu/2) - (n/2) log((nu-2) pi)
//                  - (1/2) sum_i log Sigma_i - ((nu+n)/2) log w,
//   w = 1 + res' diag(Sigma)^{-1} res / (nu - 2),   res = y - Lambda f.

namespace detail {

// Parameter-only part of the log-density, reused across observations.
inline double t_log_norm_const(Eigen::Index n, double nu, const Eigen::VectorXd& sigma) {
  return std::lgamma(0.5 * (nu + static_cast<double>(n))) - std::lgamma(0.5 * nu) -
         0.5 * static_cast<double>(n) * std::log((nu - 2.0) * M_PI) -
         0.5 * sigma.array().log().sum();
}

inline double t_w(double quad_form, double nu) { return 1.0 + quad_form / (nu - 2.0); }

}  // namespace detail

inline void check_obs_dims(const Eigen::VectorXd& y, const Eigen::VectorXd& f,
                           const StaticParams& p) {
  if (y.size() != p.n()) throw DimensionMismatch("observation length must equal n");
  if (f.size() != p.r()) throw DimensionMismatch("factor length must equal r");
}

inline double student_t_logdensity(const Eigen::VectorXd& y, const Eigen::VectorXd& f,
                                   const StaticParams& p) {
  check_obs_dims(y, f, p);
  const Eigen::VectorXd res = y - p.Lambda * f;
  const double q = (res.array().square() / p.Sigma.array()).sum();
  return detail::t_log_norm_const(p.n(), p.nu, p.Sigma) -
         0.5 * (p.nu + static_cast<double>(p.n())) * std::log(detail::t_w(q, p.nu));
}

// Score of the log-density with respect to f:
//   grad = (nu+n)/(nu-2) * (1/w) * Lambda' diag(Sigma)^{-1} (y - Lambda f).
inline Eigen::VectorXd score(const Eigen::VectorXd& y, const Eigen::VectorXd& f,
                             const StaticParams& p) {
  check_obs_dims(y, f, p);
  const double n = static_cast<double>(p.n());
  const Eigen::VectorXd res = y - p.Lambda * f;
  const Eigen::VectorXd wres = res.array() / p.Sigma.array();
  const double w = detail::t_w(res.dot(wres), p.nu);
  return (p.nu + n) / ((p.nu - 2.0) * w) * (p.Lambda.transpose() * wres);
}

// Conditional Fisher information E[grad grad' | f]. For this density the
// exact moment is
//   I = (nu+n) nu / ((nu-2)(nu+n+2)) * Lambda' diag(Sigma)^{-1} Lambda,
// which follows from res = sqrt((nu-2) u) * Sigma^{1/2} d with
// u/(1+u) ~ Beta(n/2, nu/2) and d uniform on the sphere, so that
// E[(1/w^2) res res'] = nu (nu-2) / ((nu+n)(nu+n+2)) * diag(Sigma).
// It does not depend on f and is positive definite whenever Lambda has full
// column rank.
inline SymPosDef fisher_information(const Eigen::MatrixXd& Lambda, const Eigen::VectorXd& sigma,
                                    double nu) {
  const double n = static_cast<double>(Lambda.rows());
  const double k = (nu + n) * nu / ((nu - 2.0) * (nu + n + 2.0));
  Eigen::MatrixXd info = k * (Lambda.transpose() * sigma.cwiseInverse().asDiagonal() * Lambda);
  return SymPosDef(((info + info.transpose()) * 0.5).eval());
}

inline SymPosDef fisher_information(const StaticParams& p) {
  return fisher_information(p.Lambda, p.Sigma, p.nu);
}

}  // namespace sdfactor
