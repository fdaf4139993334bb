#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "filter.hpp"
#include "identification.hpp"
#include "optimizer.hpp"
#include "packing.hpp"
#include "parallel.hpp"
#include "restrictions.hpp"
#include "rng.hpp"
#include "tv.hpp"
#include "types.hpp"

namespace sdfactor {

struct EstimationConfig {
  LoadingRestriction restriction = LoadingRestriction::full();
  int n_factors = 1;
  double beta = 0.5;
  bool shared_B = false;
  int max_iterations = 500;
  double gradient_step = 1e-6;
  int restarts = 3;
  double perturbation_scale = 0.25;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const {
    if (n_factors < 1) throw ConstraintViolation("factor count must be positive");
    if (max_iterations < 1) throw ConstraintViolation("max_iterations must be at least 1");
    if (restarts < 1) throw ConstraintViolation("restarts must be at least 1");
    if (!(gradient_step > 0.0)) throw ConstraintViolation("gradient_step must be positive");
    if (perturbation_scale < 0.0 || perturbation_scale > 1.0)
      throw ConstraintViolation("perturbation_scale must lie in [0, 1]");
    if (beta < 0.0 || beta > 1.0) throw ConstraintViolation("beta must lie in [0, 1]");
  }
};

struct EstimationResult {
  StaticParams params;
  double total_loglik = -std::numeric_limits<double>::infinity();
  int free_param_count = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;
};

struct TvEstimationResult {
  TvParams params;
  Eigen::VectorXd l_init;
  double total_loglik = -std::numeric_limits<double>::infinity();
  int free_param_count = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;
};

namespace detail {

struct Ar1Fit {
  double intercept = 0.0;
  double slope = 0.0;
  double resid_sd = 0.0;
};

inline Ar1Fit fit_ar1(const Eigen::VectorXd& z) {
  const Eigen::Index t = z.size() - 1;
  const Eigen::VectorXd x = z.head(t);
  const Eigen::VectorXd y = z.tail(t);
  const double mx = x.mean();
  const double my = y.mean();
  const double vx = (x.array() - mx).square().sum();
  Ar1Fit fit;
  if (vx > 1e-12) {
    fit.slope = (x.array() - mx).cwiseProduct(y.array() - my).sum() / vx;
    fit.intercept = my - fit.slope * mx;
  } else {
    fit.intercept = my;
  }
  const Eigen::VectorXd resid = y.array() - fit.intercept - fit.slope * x.array();
  fit.resid_sd = std::sqrt(resid.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(t - 2, 1)));
  return fit;
}

enum class CoordKind { Loading, Intercept, ScoreAmp, Persistence, Variance, Tail, LoadingDyn };

inline std::vector<CoordKind> static_coordinate_kinds(const StaticPacking& packing) {
  std::vector<CoordKind> kinds;
  kinds.reserve(static_cast<std::size_t>(packing.size()));
  for (int i = 0; i < packing.layout().value_count(); ++i) kinds.push_back(CoordKind::Loading);
  for (int i = 0; i < packing.intercept_count(); ++i) kinds.push_back(CoordKind::Intercept);
  for (int i = 0; i < packing.r(); ++i) kinds.push_back(CoordKind::ScoreAmp);
  for (int i = 0; i < packing.persistence_count(); ++i) kinds.push_back(CoordKind::Persistence);
  for (int i = 0; i < packing.n(); ++i) kinds.push_back(CoordKind::Variance);
  kinds.push_back(CoordKind::Tail);
  return kinds;
}

inline std::vector<CoordKind> tv_coordinate_kinds(const TvPacking& packing,
                                                  const StaticPacking* base) {
  std::vector<CoordKind> kinds;
  kinds.reserve(static_cast<std::size_t>(packing.size()));
  if (packing.mode() == TvMode::ScalarTargeted) {
    kinds = static_coordinate_kinds(*base);
    kinds.push_back(CoordKind::LoadingDyn);
    kinds.push_back(CoordKind::Persistence);
    return kinds;
  }
  kinds.push_back(CoordKind::Intercept);
  for (int i = 0; i < packing.m(); ++i) kinds.push_back(CoordKind::LoadingDyn);
  for (int i = 0; i < packing.m(); ++i) kinds.push_back(CoordKind::Persistence);
  for (int i = 0; i < packing.r() - 1; ++i) kinds.push_back(CoordKind::Intercept);
  for (int i = 0; i < packing.r(); ++i) kinds.push_back(CoordKind::ScoreAmp);
  for (int i = 0; i < packing.r(); ++i) kinds.push_back(CoordKind::Persistence);
  for (int i = 0; i < packing.n(); ++i) kinds.push_back(CoordKind::Variance);
  kinds.push_back(CoordKind::Tail);
  return kinds;
}

// Multiplicative restart noise in the packed space, with clamps that keep the
// transforms away from their asymptotes.
inline Eigen::VectorXd perturb_packed(const Eigen::VectorXd& theta,
                                      const std::vector<CoordKind>& kinds, double scale,
                                      Rng& rng) {
  const double b_cap = std::atanh(0.98);
  const double sigma_floor = std::log(1e-6);
  const double nu_floor = std::log(0.25);
  Eigen::VectorXd out = theta;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] *= 1.0 + rng.uniform(-scale, scale);
    switch (kinds[static_cast<std::size_t>(i)]) {
      case CoordKind::Persistence:
        out[i] = std::clamp(out[i], -b_cap, b_cap);
        break;
      case CoordKind::Variance:
        out[i] = std::max(out[i], sigma_floor);
        break;
      case CoordKind::Tail:
        out[i] = std::max(out[i], nu_floor);
        break;
      default:
        break;
    }
  }
  return out;
}

struct RestartOutcome {
  OptResult opt;
  bool ok = false;
};

template <typename Objective>
inline OptResult best_restart(const Objective& objective, const Eigen::VectorXd& theta0,
                              const std::vector<CoordKind>& kinds,
                              const EstimationConfig& cfg) {
  BfgsOptions opts;
  opts.max_iterations = cfg.max_iterations;
  opts.gradient_step = cfg.gradient_step;

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(cfg.restarts));
  parallel_for(cfg.restarts, cfg.threads, [&](int k) {
    Eigen::VectorXd start = theta0;
    if (k > 0) {
      Rng rng(cfg.seed, 9001, static_cast<std::uint64_t>(k));
      start = perturb_packed(theta0, kinds, cfg.perturbation_scale, rng);
    }
    OptResult res = bfgs_minimize(objective, std::move(start), opts);
    outcomes[static_cast<std::size_t>(k)].ok = std::isfinite(res.fx);
    outcomes[static_cast<std::size_t>(k)].opt = std::move(res);
  });

  int best = -1;
  for (int k = 0; k < cfg.restarts; ++k) {
    if (!outcomes[static_cast<std::size_t>(k)].ok) continue;
    if (best < 0 || outcomes[static_cast<std::size_t>(k)].opt.fx <
                        outcomes[static_cast<std::size_t>(best)].opt.fx)
      best = k;
  }
  if (best < 0) throw AllRestartsFailed("every restart produced a non-finite likelihood");
  return std::move(outcomes[static_cast<std::size_t>(best)].opt);
}

inline std::vector<double> to_loglik_trace(const std::vector<double>& trace) {
  std::vector<double> out(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) out[i] = -trace[i];
  return out;
}

}  // namespace detail

// PCA loadings plus per-component AR(1) coefficients, projected onto the
// restriction mask. The persistence start is the shared value 0.95 and the
// intercepts are chosen so the implied factor mean reproduces the sample
// means; for restrictions that pin c_1 the start is rescaled through the
// scalar class so the pin holds exactly.
inline StaticParams initialize(const PanelData& data, const LoadingRestriction& restriction,
                               int r, std::uint64_t /*seed*/ = 0, double beta = 0.5) {
  data.validate();
  const Eigen::Index t_len = data.T();
  const int n = static_cast<int>(data.n());
  if (t_len <= 10 * static_cast<Eigen::Index>(r))
    throw ConstraintViolation("initialization needs more than 10 r observations");
  restriction.validate(n, r);

  const Eigen::RowVectorXd mu = data.y.colwise().mean();
  const Eigen::MatrixXd centered = data.y.rowwise() - mu;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(t_len - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw RankDeficientData("covariance eigendecomposition failed");
  const Eigen::VectorXd evals = es.eigenvalues();
  const double lmax = evals.maxCoeff();
  if (!(lmax > 0.0) || evals[n - r] <= 1e-12 * lmax)
    throw RankDeficientData("panel covariance has fewer leading components than factors");

  Eigen::MatrixXd lambda(n, r);
  Eigen::MatrixXd scores(t_len, r);
  for (int j = 0; j < r; ++j) {
    const Eigen::Index col = n - 1 - j;
    Eigen::VectorXd v = es.eigenvectors().col(col);
    Eigen::Index arg_max = 0;
    v.cwiseAbs().maxCoeff(&arg_max);
    if (v[arg_max] < 0.0) v = -v;
    const double scale = std::sqrt(evals[col]);
    lambda.col(j) = v * scale;
    scores.col(j) = centered * v / scale;
  }

  StaticParams p;
  p.beta = beta;
  p.nu = 8.0;
  p.B = (Eigen::VectorXd::Constant(r, 0.95)).asDiagonal();

  Eigen::VectorXd amp(r);
  for (int j = 0; j < r; ++j) {
    const detail::Ar1Fit fit = detail::fit_ar1(scores.col(j));
    amp[j] = std::max(fit.resid_sd, 0.01);
  }
  p.A = amp.asDiagonal();

  const Eigen::VectorXd f_mean =
      lambda.colPivHouseholderQr().solve(mu.transpose());
  p.c = 0.05 * f_mean;

  const Eigen::MatrixXd resid = centered - scores * lambda.transpose();
  p.Sigma = (resid.array().square().colwise().sum() / static_cast<double>(t_len - 1))
                .matrix()
                .transpose();
  p.Sigma = p.Sigma.cwiseMax(1e-4);

  if (restriction.kind == RestrictionKind::LowerTriangular) {
    for (int j = 0; j < r; ++j) {
      const double d = lambda(j, j);
      if (std::abs(d) > 1e-8) {
        lambda.col(j) /= d;
        p.c[j] *= d;
        p.A(j, j) *= std::pow(d * d, 1.0 - beta);
      }
    }
  }
  const LoadingLayout layout(restriction, n, r);
  p.Lambda = layout.expand(layout.project(lambda));

  if (restriction.pins_first_intercept()) {
    double q = p.c[0];
    if (std::abs(q) < 0.02) q = q < 0.0 ? -0.02 : 0.02;
    StaticParams absorbed = scalar_absorb(p, q);
    absorbed.c[0] = 1.0;
    absorbed.Lambda = layout.expand(layout.project(absorbed.Lambda));
    return absorbed;
  }
  return p;
}

inline EstimationResult maximize(const PanelData& data, const EstimationConfig& cfg,
                                 const StaticParams* start = nullptr) {
  cfg.validate();
  data.validate();
  const int n = static_cast<int>(data.n());
  const StaticPacking packing(cfg.restriction, n, cfg.n_factors, cfg.shared_B, cfg.beta);

  Eigen::VectorXd theta0;
  if (start != nullptr)
    theta0 = packing.pack(*start);
  else
    theta0 = packing.pack(initialize(data, cfg.restriction, cfg.n_factors, cfg.seed, cfg.beta));

  const auto objective = [&](const Eigen::VectorXd& theta) -> double {
    try {
      return -run_filter(data, packing.unpack(theta)).total_loglik;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const OptResult opt =
      detail::best_restart(objective, theta0, detail::static_coordinate_kinds(packing), cfg);

  EstimationResult result;
  result.params = packing.unpack(opt.x);
  result.total_loglik = -opt.fx;
  result.free_param_count = count_free_params(cfg.restriction, n, cfg.n_factors, cfg.shared_B);
  result.converged = opt.converged;
  result.iterations = opt.iterations;
  result.objective_trace = detail::to_loglik_trace(opt.trace);
  return result;
}

// Shared-intercept time-varying estimation. The loading recursion starts from
// a fixed state across every objective evaluation: the caller's l_init when
// given, otherwise the PCA loadings. The factor side starts from its own
// fixed point.
inline TvEstimationResult maximize_tv(const PanelData& data, const EstimationConfig& cfg,
                                      const TvParams* start = nullptr,
                                      const Eigen::VectorXd* l_init = nullptr) {
  cfg.validate();
  data.validate();
  const int n = static_cast<int>(data.n());
  const int r = cfg.n_factors;
  const TvPacking packing(TvMode::DiagonalSharedC, cfg.restriction, n, r, cfg.beta);

  Eigen::VectorXd l0;
  if (l_init != nullptr) {
    if (l_init->size() != packing.m()) throw DimensionMismatch("l_init must have n*r entries");
    l0 = *l_init;
  } else {
    const StaticParams pca = initialize(data, LoadingRestriction::full(), r, cfg.seed, cfg.beta);
    l0.resize(packing.m());
    Eigen::Map<Eigen::MatrixXd>(l0.data(), n, r) = pca.Lambda;
  }

  Eigen::VectorXd theta0;
  if (start != nullptr) {
    theta0 = packing.pack(*start);
  } else {
    const StaticParams base = initialize(data, LoadingRestriction::full(), r, cfg.seed, cfg.beta);
    TvParams p0;
    p0.n_series = n;
    p0.n_factors = r;
    p0.mode = TvMode::DiagonalSharedC;
    p0.beta = cfg.beta;
    p0.c_l = Eigen::VectorXd::Constant(packing.m(), 0.1);
    p0.a_l = Eigen::VectorXd::Constant(packing.m(), 0.1);
    p0.b_l = Eigen::VectorXd::LinSpaced(packing.m(), 0.88, 0.92);
    p0.c_g = base.c;
    p0.A_g = base.A;
    p0.B_g = base.B;
    p0.Sigma = base.Sigma;
    p0.nu = base.nu;
    theta0 = packing.pack(p0);
  }

  const auto objective = [&](const Eigen::VectorXd& theta) -> double {
    try {
      const TvParams p = packing.unpack(theta);
      const Eigen::VectorXd g0 = default_init(p.frozen_at(l0, Eigen::VectorXd()));
      return -run_tv_filter(data, p, l0, g0).total_loglik;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const OptResult opt = detail::best_restart(
      objective, theta0, detail::tv_coordinate_kinds(packing, nullptr), cfg);

  TvEstimationResult result;
  result.params = packing.unpack(opt.x);
  result.l_init = l0;
  result.total_loglik = -opt.fx;
  result.free_param_count = packing.size();
  result.converged = opt.converged;
  result.iterations = opt.iterations;
  result.objective_trace = detail::to_loglik_trace(opt.trace);
  return result;
}

// Two-stage targeted estimation: fit the static model, then re-estimate the
// full parameter vector jointly with the two loading-recursion scalars, the
// loading intercept staying tied to the packed loadings throughout.
inline TvEstimationResult estimate_tv_targeted(const PanelData& data,
                                               const EstimationConfig& cfg) {
  cfg.validate();
  const EstimationResult stage_one = maximize(data, cfg);

  const int n = static_cast<int>(data.n());
  const int r = cfg.n_factors;
  const TvPacking packing(TvMode::ScalarTargeted, cfg.restriction, n, r, cfg.beta);
  const StaticPacking base(cfg.restriction, n, r, false, cfg.beta);

  TvParams p0;
  p0.n_series = n;
  p0.n_factors = r;
  p0.beta = cfg.beta;
  p0.c_g = stage_one.params.c;
  p0.A_g = stage_one.params.A;
  p0.B_g = stage_one.params.B;
  p0.Sigma = stage_one.params.Sigma;
  p0.nu = stage_one.params.nu;
  Eigen::VectorXd target(packing.m());
  Eigen::Map<Eigen::MatrixXd>(target.data(), n, r) = stage_one.params.Lambda;
  p0.set_targeted(0.05, 0.95, target);

  const Eigen::VectorXd theta0 = packing.pack(p0);
  const auto objective = [&](const Eigen::VectorXd& theta) -> double {
    try {
      return -run_tv_filter(data, packing.unpack(theta)).total_loglik;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const OptResult opt = detail::best_restart(
      objective, theta0, detail::tv_coordinate_kinds(packing, &base), cfg);

  TvEstimationResult result;
  result.params = packing.unpack(opt.x);
  result.l_init = result.params.target_l;
  result.total_loglik = -opt.fx;
  result.free_param_count =
      count_free_params(cfg.restriction, n, r, false) + 2;
  result.converged = opt.converged;
  result.iterations = opt.iterations;
  result.objective_trace = detail::to_loglik_trace(opt.trace);
  return result;
}

}  // namespace sdfactor
