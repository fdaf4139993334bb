#pragma once

#include <Eigen/Dense>
#include <string>

#include "sdfactor/filter.hpp"
#include "sdfactor/rng.hpp"
#include "sdfactor/tv.hpp"

namespace sdfactor {

inline constexpr int kDefaultBurnIn = 100;

struct SimulatedPanel {
  PanelData data;
  Eigen::MatrixXd factors;  // T x r, the factor path that generated the data
};

struct SimulatedTvPanel {
  PanelData data;
  Eigen::MatrixXd factors;   // T x r
  Eigen::MatrixXd loadings;  // T x (n*r)
};

namespace detail {

inline std::vector<std::string> default_labels(Eigen::Index n) {
  std::vector<std::string> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = "s" + std::to_string(i + 1);
  return out;
}

// One observation from the covariance-parameterized Student-t: a common
// chi-square mixing draw scales independent normals so Var(eps_i) = Sigma_i.
inline void draw_obs(Rng& rng, const Eigen::VectorXd& sigma_sqrt, double nu,
                     Eigen::VectorXd& eps) {
  const double u = rng.chi_squared(nu);
  const double mix = std::sqrt((nu - 2.0) / u);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = mix * sigma_sqrt[i] * rng.normal();
}

}  // namespace detail

// Simulates the observation-driven model: each y_t is drawn from the
// conditional density at f_t, and f_{t+1} is computed from the drawn value
// exactly as the filter would. The first burn_in periods are discarded.
inline SimulatedPanel sample_path(const StaticParams& p, Eigen::Index T, std::uint64_t seed,
                                  int burn_in = kDefaultBurnIn, std::uint64_t stream = 0) {
  p.validate();
  if (T < 2) throw IncompatibleShape("need at least two observations");
  if (burn_in < 0) throw ConstraintViolation("burn-in cannot be negative");

  const Eigen::Index n = p.n(), r = p.r();
  const double nn = static_cast<double>(n);
  Rng rng(seed, stream);

  Eigen::MatrixXd scale;
  double info_scalar = 0.0;
  const bool identity_scaling = (p.beta == 0.0);
  const bool scalar_scaling = (!identity_scaling && r == 1);
  const SymPosDef info = fisher_information(p);
  if (scalar_scaling) {
    const double i11 = info.matrix()(0, 0);
    if (i11 < kEigenvalueFloor) throw EigenvalueBelowFloor(0, i11);
    info_scalar = (p.beta == 1.0) ? i11 : std::pow(i11, -p.beta);
  } else if (!identity_scaling) {
    scale = sym_power(info, -p.beta);
  }

  const Eigen::VectorXd sigma_sqrt = p.Sigma.cwiseSqrt();
  SimulatedPanel out;
  out.data.y.resize(T, n);
  out.data.labels = detail::default_labels(n);
  out.factors.resize(T, r);

  Eigen::VectorXd f = default_init(p);
  Eigen::VectorXd eps(n), y(n), wres(n), grad(r), s(r);
  const Eigen::Index total = T + burn_in;
  for (Eigen::Index t = 0; t < total; ++t) {
    detail::draw_obs(rng, sigma_sqrt, p.nu, eps);
    y.noalias() = p.Lambda * f;
    y += eps;
    if (t >= burn_in) {
      out.data.y.row(t - burn_in) = y.transpose();
      out.factors.row(t - burn_in) = f.transpose();
    }

    wres = eps.array() / p.Sigma.array();
    const double w = detail::t_w(eps.dot(wres), p.nu);
    grad.noalias() = p.Lambda.transpose() * wres;
    grad *= (p.nu + nn) / ((p.nu - 2.0) * w);
    if (identity_scaling)
      s = grad;
    else if (scalar_scaling)
      s = (p.beta == 1.0) ? Eigen::VectorXd(grad / info_scalar)
                          : Eigen::VectorXd(grad * info_scalar);
    else
      s.noalias() = scale * grad;
    f = p.c + p.A * s + p.B * f;
    if (!f.allFinite())
      throw NonFiniteState("simulated factor diverged at t = " + std::to_string(t));
  }
  return out;
}

// Simulates the model with time-varying loadings; both recursions are driven
// by the drawn observations. Initial states default to the stationary points,
// but an explicit l_init is needed when those are degenerate: equal loading
// intercepts and decay rates put every loading at the same fixed point, a
// rank-one matrix whose factor information cannot be scale-powered.
inline SimulatedTvPanel sample_tv_path(const TvParams& p, Eigen::Index T, std::uint64_t seed,
                                       int burn_in = kDefaultBurnIn, std::uint64_t stream = 0,
                                       Eigen::VectorXd l_init = Eigen::VectorXd(),
                                       Eigen::VectorXd g_init = Eigen::VectorXd()) {
  p.validate();
  if (T < 2) throw IncompatibleShape("need at least two observations");
  if (burn_in < 0) throw ConstraintViolation("burn-in cannot be negative");

  const Eigen::Index n = p.n(), r = p.r(), m = p.m();
  const double nn = static_cast<double>(n);
  const double info_coef = (p.nu + nn) * p.nu / ((p.nu - 2.0) * (p.nu + nn + 2.0));
  const bool identity_scaling = (p.beta == 0.0);
  Rng rng(seed, stream);

  const Eigen::VectorXd sigma_sqrt = p.Sigma.cwiseSqrt();
  SimulatedTvPanel out;
  out.data.y.resize(T, n);
  out.data.labels = detail::default_labels(n);
  out.factors.resize(T, r);
  out.loadings.resize(T, m);

  auto [l, g] = tv_default_init(p);
  if (l_init.size() > 0) {
    if (l_init.size() != m) throw DimensionMismatch("initial loading length must equal n*r");
    l = std::move(l_init);
  }
  if (g_init.size() > 0) {
    if (g_init.size() != r) throw DimensionMismatch("initial factor length must equal r");
    g = std::move(g_init);
  }
  Eigen::VectorXd eps(n), y(n), wres(n), grad_g(r), s_g(r), grad_l(m);
  Eigen::MatrixXd lam(n, r), info(r, r);
  const Eigen::Index total = T + burn_in;
  for (Eigen::Index t = 0; t < total; ++t) {
    lam = Eigen::Map<const Eigen::MatrixXd>(l.data(), n, r);
    detail::draw_obs(rng, sigma_sqrt, p.nu, eps);
    y.noalias() = lam * g;
    y += eps;
    if (t >= burn_in) {
      out.data.y.row(t - burn_in) = y.transpose();
      out.factors.row(t - burn_in) = g.transpose();
      out.loadings.row(t - burn_in) = l.transpose();
    }

    wres = eps.array() / p.Sigma.array();
    const double w = detail::t_w(eps.dot(wres), p.nu);
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
    for (Eigen::Index j = 0; j < r; ++j) grad_l.segment(j * n, n) = coef * g[j] * wres;

    l = p.c_l + p.a_l.cwiseProduct(grad_l) + p.b_l.cwiseProduct(l);
    g = p.c_g + p.A_g * s_g + p.B_g * g;
    if (!l.allFinite() || !g.allFinite())
      throw NonFiniteState("simulated recursion diverged at t = " + std::to_string(t));
  }
  return out;
}

}  // namespace sdfactor
