#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "sdfactor/student_t.hpp"
#include "sdfactor/types.hpp"

namespace sdfactor {

// Unconditional mean of the factor recursion, (I - B)^{-1} c, falling back to c
// when B has a unit or explosive root.
inline Eigen::VectorXd default_init(const StaticParams& p) {
  p.validate();
  const Eigen::Index r = p.r();
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(p.B, false).eigenvalues();
  if (ev.cwiseAbs().maxCoeff() >= 1.0 - 1e-9) return p.c;
  return (Eigen::MatrixXd::Identity(r, r) - p.B).partialPivLu().solve(p.c);
}

// One pass of the score-driven recursion over the panel. Produces the
// predicted factor path, the scaled scores s_t = I_t^{-beta} grad_t, the
// per-observation log-likelihood contributions, and f_{T+1}.
//
// The information matrix of the static model does not depend on f_t, so its
// -beta power is computed once. beta = 0 uses the raw score identically; the
// scalar-factor case divides by the information directly.
inline FilterOutput run_filter(const PanelData& data, const StaticParams& p,
                               const Eigen::VectorXd& f_init) {
  data.validate();
  p.validate();
  if (data.n() != p.n())
    throw DimensionMismatch("panel width must match the loading matrix");
  if (f_init.size() != p.r())
    throw DimensionMismatch("initial factor length must equal r");

  const Eigen::Index T = data.T(), n = p.n(), r = p.r();
  const double nn = static_cast<double>(n);

  const double log_norm = detail::t_log_norm_const(n, p.nu, p.Sigma);

  Eigen::MatrixXd scale;  // I^{-beta}, unused in the identity and scalar paths
  double info_scalar = 0.0;
  const bool identity_scaling = (p.beta == 0.0);
  const bool scalar_scaling = (!identity_scaling && r == 1);
  const bool scalar_division = (scalar_scaling && p.beta == 1.0);
  const SymPosDef info = fisher_information(p);
  if (scalar_scaling) {
    const double i11 = info.matrix()(0, 0);
    if (i11 < kEigenvalueFloor) throw EigenvalueBelowFloor(0, i11);
    info_scalar = scalar_division ? i11 : std::pow(i11, -p.beta);
  } else if (!identity_scaling) {
    scale = sym_power(info, -p.beta);
  }

  FilterOutput out;
  out.factors.resize(T, r);
  out.scaled_scores.resize(T, r);
  out.loglik_contribs.resize(T);

  Eigen::VectorXd f = f_init;
  Eigen::VectorXd res(n), wres(n), grad(r), s(r);
  double total = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    out.factors.row(t) = f.transpose();
    res.noalias() = data.y.row(t).transpose() - p.Lambda * f;
    wres = res.array() / p.Sigma.array();
    const double w = detail::t_w(res.dot(wres), p.nu);
    const double ll = log_norm - 0.5 * (p.nu + nn) * std::log(w);
    if (!std::isfinite(ll))
      throw NonFiniteState("log-likelihood diverged at t = " + std::to_string(t));
    out.loglik_contribs[t] = ll;
    total += ll;

    // Same expression structure as score(), so the identity-scaling and
    // scalar-division paths reproduce it without rounding differences.
    grad.noalias() = p.Lambda.transpose() * wres;
    grad *= (p.nu + nn) / ((p.nu - 2.0) * w);
    if (identity_scaling)
      s = grad;
    else if (scalar_division)
      s = grad / info_scalar;
    else if (scalar_scaling)
      s = grad * info_scalar;
    else
      s.noalias() = scale * grad;
    out.scaled_scores.row(t) = s.transpose();

    f = p.c + p.A * s + p.B * f;
    if (!f.allFinite())
      throw NonFiniteState("factor recursion diverged at t = " + std::to_string(t));
  }
  out.total_loglik = total;
  out.next_factor = f;
  return out;
}

inline FilterOutput run_filter(const PanelData& data, const StaticParams& p) {
  return run_filter(data, p, default_init(p));
}

// Point forecast of y_{T+1} from a completed filter pass.
inline Eigen::VectorXd one_step_forecast(const FilterOutput& out, const StaticParams& p) {
  if (out.next_factor.size() != p.r())
    throw DimensionMismatch("filter output does not match parameter dimension");
  return p.Lambda * out.next_factor;
}

}  // namespace sdfactor
