#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdfactor/csv.hpp"
#include "sdfactor/errors.hpp"
#include "sdfactor/estimator.hpp"
#include "sdfactor/mc.hpp"
#include "sdfactor/restrictions.hpp"
#include "sdfactor/tv.hpp"
#include "sdfactor/types.hpp"

namespace sdfactor {

using json = nlohmann::json;

namespace detail {

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw Error(name + " must be an array of row arrays");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(name + " rows have unequal length");
    for (Eigen::Index k = 0; k < cols; ++k)
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& name) {
  if (!j.is_array()) throw Error(name + " must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

// FNV-1a over the canonical dump (nlohmann objects keep sorted keys), so the
// same logical config always hashes identically regardless of input spelling.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

inline RestrictionKind restriction_kind_from_name(const std::string& name) {
  if (name == "full") return RestrictionKind::Full;
  if (name == "lower_triangular") return RestrictionKind::LowerTriangular;
  if (name == "group_lower_triangular") return RestrictionKind::GroupLowerTriangular;
  if (name == "group_common") return RestrictionKind::GroupCommon;
  if (name == "two_factor_group") return RestrictionKind::TwoFactorGroup;
  throw Error("unknown restriction kind: '" + name + "'");
}

inline json restriction_to_json(const LoadingRestriction& r) {
  json j;
  j["kind"] = restriction_name(r.kind);
  j["groups"] = r.groups;
  return j;
}

inline LoadingRestriction restriction_from_json(const json& j) {
  if (!j.contains("kind")) throw Error("restriction needs a 'kind' field");
  LoadingRestriction r;
  r.kind = restriction_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("groups")) r.groups = j.at("groups").get<std::vector<int>>();
  return r;
}

inline json static_params_to_json(const StaticParams& p) {
  json j;
  j["c"] = detail::vector_to_json(p.c);
  j["A"] = detail::matrix_to_json(p.A);
  j["B"] = detail::matrix_to_json(p.B);
  j["Lambda"] = detail::matrix_to_json(p.Lambda);
  j["Sigma"] = detail::vector_to_json(p.Sigma);
  j["nu"] = p.nu;
  j["beta"] = p.beta;
  return j;
}

inline StaticParams static_params_from_json(const json& j) {
  StaticParams p;
  p.c = detail::vector_from_json(j.at("c"), "c");
  p.A = detail::matrix_from_json(j.at("A"), "A");
  p.B = detail::matrix_from_json(j.at("B"), "B");
  p.Lambda = detail::matrix_from_json(j.at("Lambda"), "Lambda");
  p.Sigma = detail::vector_from_json(j.at("Sigma"), "Sigma");
  p.nu = j.at("nu").get<double>();
  p.beta = j.at("beta").get<double>();
  p.validate();
  return p;
}

inline json tv_params_to_json(const TvParams& p) {
  json j;
  j["n"] = p.n_series;
  j["r"] = p.n_factors;
  j["mode"] = p.mode == TvMode::ScalarTargeted ? "scalar_targeted" : "diagonal_shared_c";
  j["c_l"] = detail::vector_to_json(p.c_l);
  j["a_l"] = detail::vector_to_json(p.a_l);
  j["b_l"] = detail::vector_to_json(p.b_l);
  if (p.target_l.size() > 0) j["target_l"] = detail::vector_to_json(p.target_l);
  j["c_g"] = detail::vector_to_json(p.c_g);
  j["A_g"] = detail::matrix_to_json(p.A_g);
  j["B_g"] = detail::matrix_to_json(p.B_g);
  j["Sigma"] = detail::vector_to_json(p.Sigma);
  j["nu"] = p.nu;
  j["beta"] = p.beta;
  j["alpha"] = p.alpha;
  return j;
}

inline TvParams tv_params_from_json(const json& j) {
  TvParams p;
  p.n_series = j.at("n").get<Eigen::Index>();
  p.n_factors = j.at("r").get<Eigen::Index>();
  const std::string mode = j.value("mode", "diagonal_shared_c");
  if (mode == "scalar_targeted")
    p.mode = TvMode::ScalarTargeted;
  else if (mode == "diagonal_shared_c")
    p.mode = TvMode::DiagonalSharedC;
  else
    throw Error("unknown tv mode: '" + mode + "'");
  p.c_l = detail::vector_from_json(j.at("c_l"), "c_l");
  p.a_l = detail::vector_from_json(j.at("a_l"), "a_l");
  p.b_l = detail::vector_from_json(j.at("b_l"), "b_l");
  if (j.contains("target_l")) p.target_l = detail::vector_from_json(j.at("target_l"), "target_l");
  p.c_g = detail::vector_from_json(j.at("c_g"), "c_g");
  p.A_g = detail::matrix_from_json(j.at("A_g"), "A_g");
  p.B_g = detail::matrix_from_json(j.at("B_g"), "B_g");
  p.Sigma = detail::vector_from_json(j.at("Sigma"), "Sigma");
  p.nu = j.at("nu").get<double>();
  p.beta = j.at("beta").get<double>();
  p.alpha = j.value("alpha", 0.0);
  p.validate();
  return p;
}

inline json estimation_config_to_json(const EstimationConfig& cfg) {
  json j;
  j["restriction"] = restriction_to_json(cfg.restriction);
  j["n_factors"] = cfg.n_factors;
  j["beta"] = cfg.beta;
  j["shared_B"] = cfg.shared_B;
  j["max_iterations"] = cfg.max_iterations;
  j["gradient_step"] = cfg.gradient_step;
  j["restarts"] = cfg.restarts;
  j["perturbation_scale"] = cfg.perturbation_scale;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j;
}

inline EstimationConfig estimation_config_from_json(const json& j) {
  EstimationConfig cfg;
  if (j.contains("restriction")) cfg.restriction = restriction_from_json(j.at("restriction"));
  cfg.n_factors = j.value("n_factors", cfg.n_factors);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.shared_B = j.value("shared_B", cfg.shared_B);
  cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
  cfg.gradient_step = j.value("gradient_step", cfg.gradient_step);
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.perturbation_scale = j.value("perturbation_scale", cfg.perturbation_scale);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.validate();
  return cfg;
}

// Fitted-model document: everything compare/forecast need to rebuild the model
// without re-reading the data.
inline json fit_to_json(const EstimationResult& fit, const EstimationConfig& cfg,
                        std::uint64_t seed, std::uint64_t config_hash) {
  json j;
  j["mode"] = "static";
  j["params"] = static_params_to_json(fit.params);
  j["loglik"] = fit.total_loglik;
  j["free_params"] = fit.free_param_count;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["restriction"] = restriction_to_json(cfg.restriction);
  j["shared_B"] = cfg.shared_B;
  j["n"] = fit.params.n();
  j["r"] = fit.params.r();
  j["beta"] = fit.params.beta;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j;
}

inline json tv_fit_to_json(const TvEstimationResult& fit, const EstimationConfig& cfg,
                           std::uint64_t seed, std::uint64_t config_hash) {
  json j;
  j["mode"] = "tv";
  j["params"] = tv_params_to_json(fit.params);
  j["l_init"] = detail::vector_to_json(fit.l_init);
  j["loglik"] = fit.total_loglik;
  j["free_params"] = fit.free_param_count;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["restriction"] = restriction_to_json(cfg.restriction);
  j["n"] = fit.params.n();
  j["r"] = fit.params.r();
  j["beta"] = fit.params.beta;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j;
}

inline McDesign mc_design_from_json(const json& j) {
  McDesign d;
  d.dgp = static_params_from_json(j.at("dgp"));
  d.redraw_lambda = j.value("redraw_lambda", d.redraw_lambda);
  for (const auto& t : j.at("sample_sizes")) d.sample_sizes.push_back(t.get<Eigen::Index>());
  d.replications = j.at("replications").get<int>();
  d.seed = j.value("seed", d.seed);
  d.perturbation_scale = j.value("perturbation_scale", d.perturbation_scale);
  d.kde_grid = j.value("kde_grid", d.kde_grid);
  d.validate();
  return d;
}

inline TvMcDesign tv_mc_design_from_json(const json& j) {
  TvMcDesign d;
  d.dgp = tv_params_from_json(j.at("dgp"));
  d.redraw_loading_amp = j.value("redraw_loading_amp", d.redraw_loading_amp);
  d.loading_amp_max = j.value("loading_amp_max", d.loading_amp_max);
  d.sample_size = j.at("sample_size").get<Eigen::Index>();
  d.replications = j.at("replications").get<int>();
  d.seed = j.value("seed", d.seed);
  d.perturbation_scale = j.value("perturbation_scale", d.perturbation_scale);
  d.kde_grid = j.value("kde_grid", d.kde_grid);
  d.validate();
  return d;
}

inline std::uint64_t config_hash(const json& j) { return detail::fnv1a64(j.dump()); }

inline void write_json(const std::string& path, const json& j) {
  detail::atomic_write(path, j.dump(2) + "\n");
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace sdfactor
