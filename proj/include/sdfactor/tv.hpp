#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "sdfactor/student_t.hpp"
#include "sdfactor/types.hpp"

namespace sdfactor {

// Extension with time-varying loadings. The stacked loading vector
// l_t = vec(Lambda_t) (column-major) follows its own score-driven recursion
// next to the factor one:
//   l_{t+1} = c_l + A_l s_t^l + B_l l_t,
//   g_{t+1} = c_g + A_g s_t^g + B_g g_t,
// with s^l the raw score (identity scaling, alpha = 0) and s^g the
// information-scaled score built from the current Lambda_t.
enum class TvMode {
  DiagonalSharedC,  // one shared loading intercept, free diagonal A_l and B_l
  ScalarTargeted,   // c_l = (I - B_l) target, A_l = a_l I, B_l = b_l I
};

struct TvParams {
  Eigen::Index n_series = 0;
  Eigen::Index n_factors = 0;

  // Loading recursion, diagonal coefficients stored as vectors of length n*r.
  Eigen::VectorXd c_l;
  Eigen::VectorXd a_l;
  Eigen::VectorXd b_l;
  Eigen::VectorXd target_l;  // anchor for ScalarTargeted, vec of the static fit

  // Factor recursion.
  Eigen::VectorXd c_g;
  Eigen::MatrixXd A_g;
  Eigen::MatrixXd B_g;

  Eigen::VectorXd Sigma;
  double nu = 0.0;
  double beta = 0.5;   // information exponent for the factor score
  double alpha = 0.0;  // loading-score exponent, identity scaling only
  TvMode mode = TvMode::DiagonalSharedC;

  Eigen::Index n() const { return n_series; }
  Eigen::Index r() const { return n_factors; }
  Eigen::Index m() const { return n_series * n_factors; }

  void validate() const {
    const Eigen::Index nn = n(), rr = r(), mm = m();
    if (nn < 1 || rr < 1 || nn < rr) throw IncompatibleShape("need n >= r >= 1");
    if (c_l.size() != mm || a_l.size() != mm || b_l.size() != mm)
      throw DimensionMismatch("loading recursion coefficients must have length n*r");
    if (mode == TvMode::ScalarTargeted && target_l.size() != mm)
      throw DimensionMismatch("targeted mode needs a target of length n*r");
    if (c_g.size() != rr || A_g.rows() != rr || A_g.cols() != rr || B_g.rows() != rr ||
        B_g.cols() != rr)
      throw DimensionMismatch("factor recursion coefficients must match r");
    if (Sigma.size() != nn) throw DimensionMismatch("Sigma must have one variance per series");
    if (!(nu > 2.0)) throw ConstraintViolation("nu must exceed 2");
    if ((Sigma.array() <= 0.0).any()) throw ConstraintViolation("Sigma entries must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConstraintViolation("beta must lie in [0, 1]");
    if (alpha != 0.0)
      throw ConstraintViolation("only identity scaling of the loading score is supported");
    if (mode == TvMode::ScalarTargeted) {
      const Eigen::VectorXd implied =
          (Eigen::VectorXd::Ones(mm) - b_l).cwiseProduct(target_l);
      if ((c_l - implied).cwiseAbs().maxCoeff() > 1e-10)
        throw ConstraintViolation("targeted mode requires c_l = (I - B_l) target");
    }
  }

  // Keeps the targeting identity when a_l and b_l are scalars.
  void set_targeted(double a, double b, const Eigen::VectorXd& target) {
    mode = TvMode::ScalarTargeted;
    target_l = target;
    a_l = Eigen::VectorXd::Constant(m(), a);
    b_l = Eigen::VectorXd::Constant(m(), b);
    c_l = (Eigen::VectorXd::Ones(m()) - b_l).cwiseProduct(target_l);
  }

  Eigen::MatrixXd unvec_loading(const Eigen::VectorXd& l) const {
    if (l.size() != m()) throw DimensionMismatch("stacked loading has the wrong length");
    return Eigen::Map<const Eigen::MatrixXd>(l.data(), n(), r());
  }

  // View of the observation density at a fixed loading matrix, reusing the
  // static machinery for densities, scores, and information.
  StaticParams frozen_at(const Eigen::VectorXd& l, const Eigen::VectorXd& /*g*/) const {
    StaticParams p;
    p.Lambda = unvec_loading(l);
    p.Sigma = Sigma;
    p.nu = nu;
    p.beta = beta;
    p.c = c_g;
    p.A = A_g;
    p.B = B_g;
    return p;
  }
};

// Score of the log-density with respect to the stacked loading vector:
//   grad_l = (nu+n)/((nu-2) w) * (g kron I_n) Sigma^{-1} (y - Lambda g)
//          = (nu+n)/((nu-2) w) * vec(Sigma^{-1} res g').
inline Eigen::VectorXd loading_score(const Eigen::VectorXd& y, const Eigen::VectorXd& l,
                                     const Eigen::VectorXd& g, const TvParams& p) {
  if (y.size() != p.n()) throw DimensionMismatch("observation length must equal n");
  if (g.size() != p.r()) throw DimensionMismatch("factor length must equal r");
  const Eigen::MatrixXd lam = p.unvec_loading(l);
  const double nn = static_cast<double>(p.n());
  const Eigen::VectorXd res = y - lam * g;
  const Eigen::VectorXd wres = res.array() / p.Sigma.array();
  const double w = detail::t_w(res.dot(wres), p.nu);
  const Eigen::MatrixXd outer = wres * g.transpose();
  return (p.nu + nn) / ((p.nu - 2.0) * w) *
         Eigen::Map<const Eigen::VectorXd>(outer.data(), p.m());
}

struct TvFilterOutput {
  Eigen::MatrixXd factors;          // T x r
  Eigen::MatrixXd loadings;         // T x (n*r), stacked column-major
  Eigen::MatrixXd scaled_scores;    // T x r, factor side
  Eigen::VectorXd loglik_contribs;  // T
  double total_loglik = 0.0;
  Eigen::VectorXd next_factor;
  Eigen::VectorXd next_loading;
};

// Joint recursion over loadings and factors. The factor information matrix
// depends on Lambda_t, so its -beta power is recomputed every period.
inline TvFilterOutput run_tv_filter(const PanelData& data, const TvParams& p,
                                    const Eigen::VectorXd& l_init,
                                    const Eigen::VectorXd& g_init) {
  data.validate();
  p.validate();
  if (data.n() != p.n()) throw DimensionMismatch("panel width must match the loading matrix");
  if (l_init.size() != p.m()) throw DimensionMismatch("initial loading length must equal n*r");
  if (g_init.size() != p.r()) throw DimensionMismatch("initial factor length must equal r");

  const Eigen::Index T = data.T(), n = p.n(), r = p.r(), m = p.m();
  const double nn = static_cast<double>(n);
  const double log_norm = detail::t_log_norm_const(n, p.nu, p.Sigma);
  const double info_coef = (p.nu + nn) * p.nu / ((p.nu - 2.0) * (p.nu + nn + 2.0));
  const bool identity_scaling = (p.beta == 0.0);

  TvFilterOutput out;
  out.factors.resize(T, r);
  out.loadings.resize(T, m);
  out.scaled_scores.resize(T, r);
  out.loglik_contribs.resize(T);

  Eigen::VectorXd l = l_init, g = g_init;
  Eigen::VectorXd res(n), wres(n), grad_g(r), s_g(r), grad_l(m);
  Eigen::MatrixXd lam(n, r), info(r, r);
  double total = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    out.factors.row(t) = g.transpose();
    out.loadings.row(t) = l.transpose();
    lam = Eigen::Map<const Eigen::MatrixXd>(l.data(), n, r);

    res.noalias() = data.y.row(t).transpose() - lam * g;
    wres = res.array() / p.Sigma.array();
    const double w = detail::t_w(res.dot(wres), p.nu);
    const double ll = log_norm - 0.5 * (p.nu + nn) * std::log(w);
    if (!std::isfinite(ll))
      throw NonFiniteState("log-likelihood diverged at t = " + std::to_string(t));
    out.loglik_contribs[t] = ll;
    total += ll;

    const double coef = (p.nu + nn) / ((p.nu - 2.0) * w);
    grad_g.noalias() = lam.transpose() * wres;
    grad_g *= coef;
    if (identity_scaling) {
      s_g = grad_g;
    } else {
      info.noalias() = lam.transpose() * p.Sigma.cwiseInverse().asDiagonal() * lam;
      info *= info_coef;
      if (r == 1) {
        const double i11 = info(0, 0);
        if (i11 < kEigenvalueFloor) throw EigenvalueBelowFloor(0, i11);
        if (p.beta == 1.0)
          s_g = grad_g / i11;
        else
          s_g = grad_g * std::pow(i11, -p.beta);
      } else {
        s_g.noalias() =
            sym_power(SymPosDef(((info + info.transpose()) * 0.5).eval()), -p.beta) * grad_g;
      }
    }
    out.scaled_scores.row(t) = s_g.transpose();

    // alpha = 0: the loading score enters unscaled.
    for (Eigen::Index j = 0; j < r; ++j)
      grad_l.segment(j * n, n) = coef * g[j] * wres;

    l = p.c_l + p.a_l.cwiseProduct(grad_l) + p.b_l.cwiseProduct(l);
    g = p.c_g + p.A_g * s_g + p.B_g * g;
    if (!l.allFinite() || !g.allFinite())
      throw NonFiniteState("recursion diverged at t = " + std::to_string(t));
  }
  out.total_loglik = total;
  out.next_factor = g;
  out.next_loading = l;
  return out;
}

// Stationary points of the two recursions, used as default initial values.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> tv_default_init(const TvParams& p) {
  p.validate();
  Eigen::VectorXd l(p.m());
  if (p.mode == TvMode::ScalarTargeted) {
    l = p.target_l;
  } else {
    for (Eigen::Index i = 0; i < p.m(); ++i)
      l[i] = (std::abs(p.b_l[i]) < 1.0 - 1e-9) ? p.c_l[i] / (1.0 - p.b_l[i]) : p.c_l[i];
  }
  Eigen::VectorXd g;
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(p.B_g, false).eigenvalues();
  if (ev.cwiseAbs().maxCoeff() >= 1.0 - 1e-9)
    g = p.c_g;
  else
    g = (Eigen::MatrixXd::Identity(p.r(), p.r()) - p.B_g).partialPivLu().solve(p.c_g);
  return {l, g};
}

inline TvFilterOutput run_tv_filter(const PanelData& data, const TvParams& p) {
  const auto [l0, g0] = tv_default_init(p);
  return run_tv_filter(data, p, l0, g0);
}

}  // namespace sdfactor
