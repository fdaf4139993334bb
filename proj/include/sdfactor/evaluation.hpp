#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "estimator.hpp"
#include "filter.hpp"
#include "identification.hpp"
#include "parallel.hpp"
#include "restrictions.hpp"
#include "stats.hpp"
#include "tv.hpp"
#include "types.hpp"

namespace sdfactor {

struct ComparisonRow {
  std::string label;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int free_params = 0;
};

// Per-observation criteria: both are divided by the sample length, so values
// are comparable across panels of different length.
inline std::pair<double, double> information_criteria(double loglik, int free_params,
                                                      Eigen::Index T) {
  if (T < 1) throw ConstraintViolation("information criteria need at least one observation");
  if (free_params < 0) throw ConstraintViolation("free parameter count cannot be negative");
  const double t = static_cast<double>(T);
  const double k = static_cast<double>(free_params);
  const double aic = (-2.0 * loglik + 2.0 * k) / t;
  const double bic = (-2.0 * loglik + k * std::log(t)) / t;
  return {aic, bic};
}

inline ComparisonRow make_comparison_row(std::string label, double loglik, int free_params,
                                         Eigen::Index T) {
  ComparisonRow row;
  row.label = std::move(label);
  row.loglik = loglik;
  row.free_params = free_params;
  std::tie(row.aic, row.bic) = information_criteria(loglik, free_params, T);
  return row;
}

struct LrResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
};

inline LrResult lr_test(double loglik_restricted, double loglik_full, int df) {
  if (df < 1) throw ConstraintViolation("likelihood ratio test needs at least one degree of freedom");
  if (loglik_full < loglik_restricted - 1e-6)
    throw NestingViolation("restricted likelihood exceeds the nesting model's");
  LrResult res;
  res.df = df;
  res.statistic = std::max(0.0, 2.0 * (loglik_full - loglik_restricted));
  res.p_value = chi_square_upper_tail(res.statistic, static_cast<double>(df));
  return res;
}

// Mean squared one-step-ahead prediction error over all cells, on whatever
// scale the panel is in.
inline double insample_mse(const PanelData& data, const StaticParams& p) {
  const FilterOutput out = run_filter(data, p);
  const Eigen::MatrixXd resid = data.y - out.factors * p.Lambda.transpose();
  return resid.squaredNorm() / static_cast<double>(data.T() * data.n());
}

inline double insample_mse(const PanelData& data, const TvParams& p,
                           const Eigen::VectorXd& l_init, const Eigen::VectorXd& g_init) {
  const TvFilterOutput out = run_tv_filter(data, p, l_init, g_init);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < data.T(); ++t) {
    const Eigen::MatrixXd lambda_t = p.unvec_loading(out.loadings.row(t).transpose());
    acc += (data.y.row(t).transpose() - lambda_t * out.factors.row(t).transpose()).squaredNorm();
  }
  return acc / static_cast<double>(data.T() * data.n());
}

namespace detail {

inline PanelData window_slice(const PanelData& data, Eigen::Index start, Eigen::Index len) {
  PanelData out;
  out.y = data.y.middleRows(start, len);
  out.labels = data.labels;
  if (!data.dates.empty())
    out.dates.assign(data.dates.begin() + start, data.dates.begin() + start + len);
  out.standardized = data.standardized;
  out.means = data.means;
  out.sds = data.sds;
  return out;
}

// Maps a fitted restricted model into the nesting model's parameter space.
// When the nesting restriction pins the first intercept and the restricted one
// does not, the scalar transformation with q = c_1 lands exactly on the pinned
// representative of the same equivalence class. The exact q keeps the mapped
// point likelihood-equivalent; only a vanishing intercept defeats the map.
inline StaticParams nesting_warm_start(const StaticParams& restricted_fit,
                                       const LoadingRestriction& nesting, int n, int r) {
  StaticParams warm = restricted_fit;
  if (nesting.pins_first_intercept() && warm.c[0] != 1.0) {
    const double q = warm.c[0];
    if (std::abs(q) < 1e-10)
      throw SingularTransform("restricted intercept too close to zero to repin");
    warm = scalar_absorb(warm, q);
    warm.c[0] = 1.0;
  }
  const LoadingLayout layout(nesting, n, r);
  warm.Lambda = layout.expand(layout.project(warm.Lambda));
  return warm;
}

}  // namespace detail

struct NestedFit {
  EstimationResult restricted;
  EstimationResult full;
  LrResult lr;
};

// Fits the restricted model, then the nesting model from its own start, from
// a warm start at the repinned restricted optimum, and at that repinned point
// itself. Keeping the best of the three guarantees the likelihood ordering
// that nesting implies: the repinned point is likelihood-equivalent to the
// restricted optimum, so the full fit can never fall below it.
inline NestedFit fit_nested_pair(const PanelData& data, const EstimationConfig& restricted_cfg,
                                 const EstimationConfig& full_cfg) {
  if (restricted_cfg.n_factors != full_cfg.n_factors)
    throw NestingViolation("nested models must share the factor count");
  NestedFit out;
  out.restricted = maximize(data, restricted_cfg);

  const int n = static_cast<int>(data.n());
  const StaticParams warm = detail::nesting_warm_start(
      out.restricted.params, full_cfg.restriction, n, full_cfg.n_factors);

  EstimationResult direct = maximize(data, full_cfg);

  EstimationResult projected;
  projected.params = warm;
  projected.total_loglik = run_filter(data, warm).total_loglik;
  projected.free_param_count = direct.free_param_count;
  projected.converged = out.restricted.converged;
  projected.iterations = 0;

  EstimationConfig warm_cfg = full_cfg;
  warm_cfg.restarts = 1;
  EstimationResult from_warm = projected;
  try {
    EstimationResult refined = maximize(data, warm_cfg, &warm);
    if (refined.total_loglik > from_warm.total_loglik) from_warm = std::move(refined);
  } catch (const Error&) {
  }

  out.full = from_warm.total_loglik >= direct.total_loglik ? std::move(from_warm)
                                                           : std::move(direct);

  const int df = out.full.free_param_count - out.restricted.free_param_count;
  out.lr = lr_test(out.restricted.total_loglik, out.full.total_loglik, df);
  return out;
}

struct RollingForecast {
  Eigen::MatrixXd forecasts;  // (T - window) x n, row t is the prediction for origin window + t
  Eigen::MatrixXd actuals;    // matching observations
  std::vector<std::string> target_dates;
  std::vector<Eigen::Index> failed_origins;  // target row indices (into forecasts) that failed
  double mse = std::numeric_limits<double>::quiet_NaN();
};

// One-step-ahead forecasts from re-estimation over a rolling window. Each
// origin sees only observations up to itself; the model is warm-started from
// the previous origin's optimum unless cold_start re-initializes every window.
// A caller-supplied fixed model skips re-estimation and filters each window
// as is.
inline RollingForecast rolling_forecast(const PanelData& data, const EstimationConfig& cfg,
                                        Eigen::Index window, bool cold_start = false,
                                        const StaticParams* fixed_params = nullptr) {
  data.validate();
  cfg.validate();
  if (window >= data.T()) throw ConstraintViolation("window must be shorter than the sample");
  if (fixed_params == nullptr && window <= 10 * static_cast<Eigen::Index>(cfg.n_factors))
    throw ConstraintViolation("window too short to initialize the estimator");

  const Eigen::Index n = data.n();
  const Eigen::Index horizon = data.T() - window;
  RollingForecast out;
  out.forecasts = Eigen::MatrixXd::Constant(horizon, n, std::numeric_limits<double>::quiet_NaN());
  out.actuals.resize(horizon, n);
  if (!data.dates.empty()) out.target_dates.resize(static_cast<std::size_t>(horizon));

  for (Eigen::Index h = 0; h < horizon; ++h) {
    const Eigen::Index origin = window - 1 + h;
    out.actuals.row(h) = data.y.row(origin + 1);
    if (!data.dates.empty())
      out.target_dates[static_cast<std::size_t>(h)] = data.dates[static_cast<std::size_t>(origin + 1)];
  }

  std::vector<char> ok_flags(static_cast<std::size_t>(horizon), 0);

  // Emits the forecast for target row h from an already selected model.
  auto emit = [&](Eigen::Index h, const StaticParams& model) {
    const Eigen::Index origin = window - 1 + h;  // last observation the model may see
    const PanelData win = detail::window_slice(data, origin - window + 1, window);
    const FilterOutput filt = run_filter(win, model);
    out.forecasts.row(h) = (model.Lambda * filt.next_factor).transpose();
    ok_flags[static_cast<std::size_t>(h)] = 1;
  };

  if (fixed_params != nullptr) {
    for (Eigen::Index h = 0; h < horizon; ++h) emit(h, *fixed_params);
  } else if (cold_start) {
    // Independent origins, safe to run concurrently; each writes its own row.
    EstimationConfig inner = cfg;
    inner.threads = 1;
    parallel_for(static_cast<int>(horizon), cfg.threads, [&](int hi) {
      const Eigen::Index h = hi;
      const Eigen::Index origin = window - 1 + h;
      const PanelData win = detail::window_slice(data, origin - window + 1, window);
      try {
        const EstimationResult fit = maximize(win, inner);
        if (std::isfinite(fit.total_loglik)) emit(h, fit.params);
      } catch (const Error&) {
      }
    });
  } else {
    bool have_warm = false;
    StaticParams warm;
    for (Eigen::Index h = 0; h < horizon; ++h) {
      const Eigen::Index origin = window - 1 + h;
      const PanelData win = detail::window_slice(data, origin - window + 1, window);
      EstimationResult fit;
      bool ok = false;
      if (have_warm) {
        EstimationConfig warm_cfg = cfg;
        warm_cfg.restarts = 1;
        try {
          fit = maximize(win, warm_cfg, &warm);
          ok = std::isfinite(fit.total_loglik);
        } catch (const Error&) {
          ok = false;
        }
      }
      if (!ok) {
        try {
          fit = maximize(win, cfg);
          ok = std::isfinite(fit.total_loglik);
        } catch (const Error&) {
          ok = false;
        }
      }
      if (ok) {
        warm = fit.params;
        have_warm = true;
        emit(h, fit.params);
      }
    }
  }

  double sq_sum = 0.0;
  Eigen::Index ok_cells = 0;
  for (Eigen::Index h = 0; h < horizon; ++h) {
    if (!ok_flags[static_cast<std::size_t>(h)]) {
      out.failed_origins.push_back(h);
      continue;
    }
    sq_sum += (out.forecasts.row(h) - out.actuals.row(h)).squaredNorm();
    ok_cells += n;
  }
  if (ok_cells > 0) out.mse = sq_sum / static_cast<double>(ok_cells);
  return out;
}

}  // namespace sdfactor
