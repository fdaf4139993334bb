#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "estimator.hpp"
#include "identification.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "types.hpp"

namespace sdfactor {

inline constexpr double kMcFailureBudget = 0.05;

struct McDesign {
  StaticParams dgp;                        // Lambda is redrawn per replication when redraw_lambda
  bool redraw_lambda = true;               // per-entry U(0,1), fresh each replication
  std::vector<Eigen::Index> sample_sizes;
  int replications = 0;
  std::uint64_t seed = 1;
  double perturbation_scale = 0.25;        // relative shift applied to the truth start
  int kde_grid = 256;

  void validate() const {
    if (replications < 0) throw ConstraintViolation("replication count cannot be negative");
    if (sample_sizes.empty()) throw ConstraintViolation("design needs at least one sample size");
    if (perturbation_scale < 0.0 || perturbation_scale > 1.0)
      throw ConstraintViolation("perturbation_scale must lie in [0, 1]");
    dgp.validate();
  }
};

struct McRecord {
  Eigen::Index sample_size = 0;
  int replication = 0;
  bool ok = false;
  bool converged = false;
  Eigen::VectorXd scalars;  // tracked scalar estimates, NaN filled on failure
  double lambda_frobenius = std::numeric_limits<double>::quiet_NaN();
  double total_loglik = std::numeric_limits<double>::quiet_NaN();
};

struct McScalarSummary {
  std::string name;
  double truth = 0.0;
  double median_estimate = 0.0;
  double rmse = 0.0;
  KdeCurve kde;
};

struct McSizeSummary {
  Eigen::Index sample_size = 0;
  int failures = 0;
  std::vector<McScalarSummary> scalars;
  double lambda_frobenius_median = std::numeric_limits<double>::quiet_NaN();
};

struct McResult {
  std::vector<std::string> scalar_names;
  std::vector<McRecord> records;        // ordered by (sample size, replication)
  std::vector<McSizeSummary> summaries;
};

namespace detail {

enum : std::uint64_t { kStreamLambda = 1, kStreamPath = 2, kStreamPerturb = 3, kStreamInit = 4 };

inline std::uint64_t mc_stream(std::uint64_t kind, std::uint64_t size_index, std::uint64_t rep) {
  return (kind << 48) | (size_index << 32) | rep;
}

inline std::vector<std::string> static_scalar_names(int r) {
  std::vector<std::string> names;
  for (int j = 1; j < r; ++j) names.push_back("c" + std::to_string(j + 1));
  for (int j = 0; j < r; ++j) names.push_back("a" + std::to_string(j + 1));
  for (int j = 0; j < r; ++j) names.push_back("b" + std::to_string(j + 1));
  names.push_back("nu");
  return names;
}

inline Eigen::VectorXd static_scalar_values(const StaticParams& p) {
  const int r = static_cast<int>(p.r());
  Eigen::VectorXd v(3 * r);
  int k = 0;
  for (int j = 1; j < r; ++j) v[k++] = p.c[j];
  for (int j = 0; j < r; ++j) v[k++] = p.A(j, j);
  for (int j = 0; j < r; ++j) v[k++] = p.B(j, j);
  v[k++] = p.nu;
  return v;
}

inline void summarize_size(McResult& result, Eigen::Index sample_size,
                           const Eigen::VectorXd& truth_scalars, int kde_grid) {
  McSizeSummary summary;
  summary.sample_size = sample_size;

  std::vector<std::vector<double>> per_scalar(result.scalar_names.size());
  std::vector<double> frob;
  for (const McRecord& rec : result.records) {
    if (rec.sample_size != sample_size) continue;
    if (!rec.ok) {
      ++summary.failures;
      continue;
    }
    for (std::size_t s = 0; s < per_scalar.size(); ++s)
      per_scalar[s].push_back(rec.scalars[static_cast<Eigen::Index>(s)]);
    if (std::isfinite(rec.lambda_frobenius)) frob.push_back(rec.lambda_frobenius);
  }

  for (std::size_t s = 0; s < per_scalar.size(); ++s) {
    McScalarSummary sc;
    sc.name = result.scalar_names[s];
    sc.truth = truth_scalars[static_cast<Eigen::Index>(s)];
    if (!per_scalar[s].empty()) {
      sc.median_estimate = median(per_scalar[s]);
      double acc = 0.0;
      for (double x : per_scalar[s]) acc += (x - sc.truth) * (x - sc.truth);
      sc.rmse = std::sqrt(acc / static_cast<double>(per_scalar[s].size()));
      sc.kde = gaussian_kde(per_scalar[s], kde_grid);
    }
    summary.scalars.push_back(std::move(sc));
  }
  if (!frob.empty()) summary.lambda_frobenius_median = median(frob);
  result.summaries.push_back(std::move(summary));
}

inline void enforce_failure_budget(const McResult& result) {
  int failures = 0;
  for (const McRecord& rec : result.records)
    if (!rec.ok) ++failures;
  const double rate = result.records.empty()
                          ? 0.0
                          : static_cast<double>(failures) / static_cast<double>(result.records.size());
  if (rate > kMcFailureBudget)
    throw ExcessiveFailureRate("estimation failed in " + std::to_string(failures) + " of " +
                               std::to_string(result.records.size()) + " replications");
}

}  // namespace detail

// Simulate-estimate replications of the static design. Each replication draws
// its own loadings, simulates a path, and starts the optimizer from the truth
// shifted multiplicatively in the packed space; every random stream is named
// by (size, replication) so the schedule of workers cannot change results.
inline McResult run_mc(const McDesign& design, const EstimationConfig& base_cfg) {
  design.validate();
  base_cfg.validate();
  const int n = static_cast<int>(design.dgp.n());
  const int r = static_cast<int>(design.dgp.r());
  if (base_cfg.n_factors != r) throw DimensionMismatch("config factor count must match the DGP");

  McResult result;
  result.scalar_names = detail::static_scalar_names(r);
  const Eigen::VectorXd truth_scalars = detail::static_scalar_values(design.dgp);
  const StaticPacking packing(base_cfg.restriction, n, r, base_cfg.shared_B, base_cfg.beta);
  const std::vector<detail::CoordKind> kinds = detail::static_coordinate_kinds(packing);

  const std::size_t total =
      design.sample_sizes.size() * static_cast<std::size_t>(design.replications);
  result.records.resize(total);

  parallel_for(static_cast<int>(total), base_cfg.threads, [&](int idx) {
    const std::size_t si = static_cast<std::size_t>(idx) /
                           static_cast<std::size_t>(design.replications);
    const int rep = idx % design.replications;
    const Eigen::Index T = design.sample_sizes[si];

    McRecord rec;
    rec.sample_size = T;
    rec.replication = rep;
    rec.scalars = Eigen::VectorXd::Constant(truth_scalars.size(),
                                            std::numeric_limits<double>::quiet_NaN());

    StaticParams truth = design.dgp;
    if (design.redraw_lambda) {
      Rng lam_rng(design.seed, detail::mc_stream(detail::kStreamLambda, si, rep));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < r; ++j) truth.Lambda(i, j) = lam_rng.uniform(0.0, 1.0);
    }

    try {
      const SimulatedPanel sim = sample_path(truth, T, design.seed, kDefaultBurnIn,
                                             detail::mc_stream(detail::kStreamPath, si, rep));

      Rng pert_rng(design.seed, detail::mc_stream(detail::kStreamPerturb, si, rep));
      const Eigen::VectorXd theta0 = detail::perturb_packed(
          packing.pack(truth), kinds, design.perturbation_scale, pert_rng);
      const StaticParams start = packing.unpack(theta0);

      EstimationConfig cfg = base_cfg;
      cfg.restarts = 1;
      cfg.threads = 1;
      const EstimationResult fit = maximize(sim.data, cfg, &start);

      rec.ok = std::isfinite(fit.total_loglik);
      rec.converged = fit.converged;
      rec.total_loglik = fit.total_loglik;
      if (rec.ok) {
        // Signed factor relabelings survive the intercept normalization, so
        // estimates are mapped back into the truth's labeling before any
        // distance or density summary.
        const AlignedEstimate aligned = align_to_truth(fit.params, truth);
        rec.scalars = detail::static_scalar_values(aligned.params);
        rec.lambda_frobenius = aligned.lambda_distance;
      }
    } catch (const Error&) {
      rec.ok = false;
    }
    result.records[static_cast<std::size_t>(idx)] = std::move(rec);
  });

  for (std::size_t si = 0; si < design.sample_sizes.size(); ++si)
    detail::summarize_size(result, design.sample_sizes[si], truth_scalars, design.kde_grid);
  detail::enforce_failure_budget(result);
  return result;
}

struct TvMcDesign {
  TvParams dgp;                       // a_l diagonals are redrawn per replication when set below
  bool redraw_loading_amp = true;     // A^(l)_ii fresh U(0, 0.5) each replication
  double loading_amp_max = 0.5;
  Eigen::Index sample_size = 0;
  int replications = 0;
  std::uint64_t seed = 1;
  double perturbation_scale = 0.25;
  int kde_grid = 256;

  void validate() const {
    if (replications < 0) throw ConstraintViolation("replication count cannot be negative");
    if (sample_size < 2) throw ConstraintViolation("sample size must be at least 2");
    if (perturbation_scale < 0.0 || perturbation_scale > 1.0)
      throw ConstraintViolation("perturbation_scale must lie in [0, 1]");
    if (!(loading_amp_max > 0.0)) throw ConstraintViolation("loading_amp_max must be positive");
    dgp.validate();
  }
};

namespace detail {

inline std::vector<std::string> tv_scalar_names(int r) {
  std::vector<std::string> names;
  names.push_back("cl");
  for (int j = 1; j < r; ++j) names.push_back("c" + std::to_string(j + 1));
  for (int j = 0; j < r; ++j) names.push_back("a" + std::to_string(j + 1));
  for (int j = 0; j < r; ++j) names.push_back("b" + std::to_string(j + 1));
  names.push_back("nu");
  return names;
}

inline Eigen::VectorXd tv_scalar_values(const TvParams& p) {
  const int r = static_cast<int>(p.r());
  Eigen::VectorXd v(3 * r + 1);
  int k = 0;
  v[k++] = p.c_l[0];
  for (int j = 1; j < r; ++j) v[k++] = p.c_g[j];
  for (int j = 0; j < r; ++j) v[k++] = p.A_g(j, j);
  for (int j = 0; j < r; ++j) v[k++] = p.B_g(j, j);
  v[k++] = p.nu;
  return v;
}

}  // namespace detail

// Time-varying-loadings counterpart at a single sample size. The simulated
// loading path starts from an explicit uniform draw because the shared
// intercept and decay make the stationary loading matrix rank one.
inline McResult run_tv_mc(const TvMcDesign& design, const EstimationConfig& base_cfg) {
  design.validate();
  base_cfg.validate();
  if (design.dgp.mode != TvMode::DiagonalSharedC)
    throw ConstraintViolation("replication design requires the shared-intercept mode");
  const int n = static_cast<int>(design.dgp.n());
  const int r = static_cast<int>(design.dgp.r());
  const int m = static_cast<int>(design.dgp.m());
  if (base_cfg.n_factors != r) throw DimensionMismatch("config factor count must match the DGP");

  McResult result;
  result.scalar_names = detail::tv_scalar_names(r);
  const Eigen::VectorXd truth_scalars = detail::tv_scalar_values(design.dgp);
  const TvPacking packing(TvMode::DiagonalSharedC, base_cfg.restriction, n, r, base_cfg.beta);
  const std::vector<detail::CoordKind> kinds = detail::tv_coordinate_kinds(packing, nullptr);

  result.records.resize(static_cast<std::size_t>(design.replications));

  parallel_for(design.replications, base_cfg.threads, [&](int rep) {
    McRecord rec;
    rec.sample_size = design.sample_size;
    rec.replication = rep;
    rec.scalars = Eigen::VectorXd::Constant(truth_scalars.size(),
                                            std::numeric_limits<double>::quiet_NaN());

    TvParams truth = design.dgp;
    Eigen::VectorXd l0(m);
    {
      Rng draw_rng(design.seed, detail::mc_stream(detail::kStreamInit, 0, rep));
      if (design.redraw_loading_amp)
        for (int i = 0; i < m; ++i) truth.a_l[i] = draw_rng.uniform(0.0, design.loading_amp_max);
      for (int i = 0; i < m; ++i) l0[i] = draw_rng.uniform(0.0, 1.0);
    }

    try {
      const SimulatedTvPanel sim =
          sample_tv_path(truth, design.sample_size, design.seed, kDefaultBurnIn,
                         detail::mc_stream(detail::kStreamPath, 0, rep), l0);

      Rng pert_rng(design.seed, detail::mc_stream(detail::kStreamPerturb, 0, rep));
      const Eigen::VectorXd theta0 = detail::perturb_packed(
          packing.pack(truth), kinds, design.perturbation_scale, pert_rng);
      const TvParams start = packing.unpack(theta0);

      EstimationConfig cfg = base_cfg;
      cfg.restarts = 1;
      cfg.threads = 1;
      const TvEstimationResult fit = maximize_tv(sim.data, cfg, &start);

      rec.ok = std::isfinite(fit.total_loglik);
      rec.converged = fit.converged;
      rec.total_loglik = fit.total_loglik;
      if (rec.ok) rec.scalars = detail::tv_scalar_values(fit.params);
    } catch (const Error&) {
      rec.ok = false;
    }
    result.records[static_cast<std::size_t>(rep)] = std::move(rec);
  });

  detail::summarize_size(result, design.sample_size, truth_scalars, design.kde_grid);
  detail::enforce_failure_budget(result);
  return result;
}

}  // namespace sdfactor
