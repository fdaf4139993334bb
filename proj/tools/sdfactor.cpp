// Command-line driver: simulate, estimate, forecast, montecarlo, diagnose,
// compare. One JSON config per run; every flag overrides the matching config
// key, and the effective config's hash plus the seed are stamped into every
// output file.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdfactor/csv.hpp"
#include "sdfactor/errors.hpp"
#include "sdfactor/estimator.hpp"
#include "sdfactor/evaluation.hpp"
#include "sdfactor/identification.hpp"
#include "sdfactor/json_io.hpp"
#include "sdfactor/mc.hpp"
#include "sdfactor/rng.hpp"
#include "sdfactor/simulator.hpp"
#include "sdfactor/tv.hpp"

namespace {

using sdfactor::json;

constexpr int kOk = 0;
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kNumericExit = 4;

int fail(int code, const std::string& phase, const std::string& msg) {
  std::cerr << "sdfactor: " << phase << " error: " << msg << "\n";
  return code;
}

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> stamps(std::uint64_t seed, std::uint64_t hash) {
  return {"seed=" + std::to_string(seed), "config_hash=" + hash_hex(hash)};
}

void stamp_json(json& j, std::uint64_t seed, std::uint64_t hash) {
  j["seed"] = seed;
  j["config_hash"] = hash_hex(hash);
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = sdfactor::read_json(path);
  if (!j.is_object()) throw sdfactor::Error("config root must be a JSON object");
  return j;
}

// Thread count is execution plumbing, not part of the experiment: results are
// thread-invariant by design, so the logged hash must be too.
std::uint64_t effective_hash(json cfg) {
  cfg.erase("threads");
  for (auto& [key, value] : cfg.items()) {
    (void)key;
    if (value.is_object()) value.erase("threads");
  }
  return sdfactor::config_hash(cfg);
}

// Flags land in the config document itself so the logged hash covers them.
struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> data;
  std::optional<std::string> out;
  std::optional<std::string> out_dir;
  std::optional<Eigen::Index> T;
  std::optional<int> r;
  std::optional<std::string> restriction;
  std::optional<std::string> groups_path;
  std::optional<double> beta;
  std::optional<std::string> mode;
  std::optional<int> restarts;
  std::optional<int> max_iterations;
  std::optional<Eigen::Index> window;
  std::optional<std::string> params_path;
  bool standardize = false;
  bool cold_start = false;
  std::vector<std::string> nests;
  std::vector<std::string> fit_files;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "RNG seed (overrides config)");
  cmd->add_option("--threads", f.threads, "worker threads (overrides config)");
}

template <typename T>
void put(json& cfg, const std::string& key, const std::optional<T>& v) {
  if (v.has_value()) cfg[key] = *v;
}

std::vector<int> read_group_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sdfactor::Error("cannot open group file " + path);
  std::vector<int> groups;
  int g = 0;
  while (in >> g) groups.push_back(g);
  if (!in.eof()) throw sdfactor::Error("group file must contain whitespace-separated integers");
  if (groups.empty()) throw sdfactor::Error("group file is empty");
  return groups;
}

std::string label_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

// ------------------------------------------------------------------ simulate

int run_simulate(const Flags& f) {
  json cfg;
  std::string out_panel, out_factors, mode;
  Eigen::Index T = 0;
  std::uint64_t seed = 1;
  Eigen::Index burn_in = sdfactor::kDefaultBurnIn;
  std::vector<std::string> labels;
  sdfactor::StaticParams sp;
  sdfactor::TvParams tp;
  try {
    cfg = load_config(f.config_path);
    put(cfg, "seed", f.seed);
    put(cfg, "T", f.T);
    put(cfg, "out", f.out);
    put(cfg, "mode", f.mode);
    mode = cfg.value("mode", "static");
    if (mode != "static" && mode != "tv")
      throw sdfactor::Error("mode must be 'static' or 'tv'");
    if (!cfg.contains("dgp")) throw sdfactor::Error("config needs a 'dgp' parameter block");
    if (mode == "static")
      sp = sdfactor::static_params_from_json(cfg.at("dgp"));
    else
      tp = sdfactor::tv_params_from_json(cfg.at("dgp"));
    T = cfg.value("T", Eigen::Index{0});
    if (T < 2) throw sdfactor::Error("'T' must be at least 2");
    seed = cfg.value("seed", std::uint64_t{1});
    burn_in = cfg.value("burn_in", burn_in);
    out_panel = cfg.value("out", std::string("panel.csv"));
    out_factors = cfg.value("factors_out", std::string());
    if (cfg.contains("labels")) labels = cfg.at("labels").get<std::vector<std::string>>();
    const Eigen::Index n = mode == "static" ? sp.n() : tp.n();
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n)
      throw sdfactor::Error("'labels' must name every series");
  } catch (const std::exception& e) {
    return fail(kConfigExit, "config", e.what());
  }

  const std::uint64_t hash = effective_hash(cfg);
  try {
    sdfactor::PanelData panel;
    Eigen::MatrixXd factors;
    if (mode == "static") {
      sdfactor::SimulatedPanel sim = sdfactor::sample_path(sp, T, seed, burn_in);
      panel = std::move(sim.data);
      factors = std::move(sim.factors);
    } else {
      sdfactor::SimulatedTvPanel sim = sdfactor::sample_tv_path(tp, T, seed, burn_in);
      panel = std::move(sim.data);
      factors = std::move(sim.factors);
    }
    if (!labels.empty())
      panel.labels = labels;
    else if (panel.labels.empty())
      for (Eigen::Index j = 0; j < panel.n(); ++j)
        panel.labels.push_back("s" + std::to_string(j + 1));
    sdfactor::write_panel_csv(out_panel, panel, stamps(seed, hash));
    if (!out_factors.empty()) {
      sdfactor::CsvTable ft;
      for (Eigen::Index j = 0; j < factors.cols(); ++j)
        ft.labels.push_back("f" + std::to_string(j + 1));
      ft.values = factors;
      sdfactor::write_table_csv(out_factors, ft, stamps(seed, hash));
    }
  } catch (const std::exception& e) {
    return fail(kNumericExit, "simulation", e.what());
  }
  std::cout << "wrote " << out_panel << " (T=" << T << ", seed=" << seed
            << ", config_hash=" << hash_hex(hash) << ")\n";
  return kOk;
}

// ------------------------------------------------------------------ estimate

int run_estimate(const Flags& f) {
  json cfg;
  sdfactor::EstimationConfig est;
  std::string data_path, out_path, mode;
  bool standardize = false;
  try {
    cfg = load_config(f.config_path);
    if (!cfg.contains("estimation")) cfg["estimation"] = json::object();
    json& ej = cfg["estimation"];
    put(ej, "n_factors", f.r);
    if (f.restriction) ej["restriction"]["kind"] = *f.restriction;
    put(ej, "beta", f.beta);
    put(ej, "seed", f.seed);
    put(ej, "threads", f.threads);
    put(ej, "restarts", f.restarts);
    put(ej, "max_iterations", f.max_iterations);
    put(cfg, "data", f.data);
    put(cfg, "out", f.out);
    put(cfg, "mode", f.mode);
    put(cfg, "groups_file", f.groups_path);
    if (f.standardize) cfg["standardize"] = true;

    mode = cfg.value("mode", "static");
    if (mode != "static" && mode != "tv" && mode != "tv_targeted")
      throw sdfactor::Error("mode must be 'static', 'tv', or 'tv_targeted'");
    data_path = cfg.value("data", std::string());
    if (data_path.empty()) throw sdfactor::Error("config needs a 'data' path");
    out_path = cfg.value("out", std::string("fit.json"));
    standardize = cfg.value("standardize", false);
    if (cfg.contains("groups_file"))
      cfg["estimation"]["restriction"]["groups"] =
          read_group_file(cfg.at("groups_file").get<std::string>());
    est = sdfactor::estimation_config_from_json(cfg.at("estimation"));
  } catch (const std::exception& e) {
    return fail(kConfigExit, "config", e.what());
  }

  sdfactor::PanelData panel;
  try {
    panel = sdfactor::load_panel_csv(data_path);
    if (standardize) panel = panel.standardize();
    if (panel.n() < est.n_factors)
      throw sdfactor::Error("panel has fewer series than factors");
  } catch (const std::exception& e) {
    return fail(kDataExit, "data", e.what());
  }

  const std::uint64_t hash = effective_hash(cfg);
  try {
    json out;
    if (mode == "static") {
      const sdfactor::EstimationResult fit = sdfactor::maximize(panel, est);
      out = sdfactor::fit_to_json(fit, est, est.seed, hash);
    } else if (mode == "tv") {
      const sdfactor::TvEstimationResult fit = sdfactor::maximize_tv(panel, est);
      out = sdfactor::tv_fit_to_json(fit, est, est.seed, hash);
    } else {
      const sdfactor::TvEstimationResult fit = sdfactor::estimate_tv_targeted(panel, est);
      out = sdfactor::tv_fit_to_json(fit, est, est.seed, hash);
    }
    out["standardized"] = standardize;
    out["T"] = panel.T();
    out["config_hash"] = hash_hex(hash);
    sdfactor::write_json(out_path, out);
    std::cout << "wrote " << out_path << " (loglik=" << out.at("loglik").get<double>()
              << ", converged=" << out.at("converged").get<bool>() << ")\n";
  } catch (const std::exception& e) {
    return fail(kNumericExit, "estimation", e.what());
  }
  return kOk;
}

// ------------------------------------------------------------------ forecast

int run_forecast(const Flags& f) {
  json cfg;
  sdfactor::EstimationConfig est;
  std::string data_path, params_path, out_forecasts, out_summary;
  Eigen::Index window = 0;
  bool standardize = false, cold_start = false;
  try {
    cfg = load_config(f.config_path);
    if (!cfg.contains("estimation")) cfg["estimation"] = json::object();
    json& ej = cfg["estimation"];
    put(ej, "n_factors", f.r);
    if (f.restriction) ej["restriction"]["kind"] = *f.restriction;
    put(ej, "beta", f.beta);
    put(ej, "seed", f.seed);
    put(ej, "threads", f.threads);
    put(cfg, "data", f.data);
    put(cfg, "window", f.window);
    put(cfg, "params", f.params_path);
    put(cfg, "out_forecasts", f.out);
    if (f.standardize) cfg["standardize"] = true;
    if (f.cold_start) cfg["cold_start"] = true;

    data_path = cfg.value("data", std::string());
    if (data_path.empty()) throw sdfactor::Error("config needs a 'data' path");
    window = cfg.value("window", Eigen::Index{0});
    if (window < 2) throw sdfactor::Error("'window' must be at least 2");
    params_path = cfg.value("params", std::string());
    out_forecasts = cfg.value("out_forecasts", std::string("forecasts.csv"));
    out_summary = cfg.value("out_summary", std::string("forecast_summary.json"));
    standardize = cfg.value("standardize", false);
    cold_start = cfg.value("cold_start", false);
    est = sdfactor::estimation_config_from_json(cfg.at("estimation"));
  } catch (const std::exception& e) {
    return fail(kConfigExit, "config", e.what());
  }

  sdfactor::PanelData panel;
  std::optional<sdfactor::StaticParams> fixed;
  try {
    panel = sdfactor::load_panel_csv(data_path);
    if (standardize) panel = panel.standardize();
    if (!params_path.empty()) {
      const json fj = sdfactor::read_json(params_path);
      fixed = sdfactor::static_params_from_json(fj.contains("params") ? fj.at("params") : fj);
      if (fixed->n() != panel.n())
        throw sdfactor::Error("fitted model width does not match the panel");
    }
  } catch (const std::exception& e) {
    return fail(kDataExit, "data", e.what());
  }

  const std::uint64_t hash = effective_hash(cfg);
  try {
    const sdfactor::RollingForecast fc = sdfactor::rolling_forecast(
        panel, est, window, cold_start, fixed.has_value() ? &*fixed : nullptr);

    // Forecast CSV lands on the original data scale.
    sdfactor::PanelData out_panel;
    out_panel.labels = panel.labels;
    out_panel.dates = fc.target_dates;
    out_panel.y = fc.forecasts;
    if (standardize)
      out_panel.y =
          (fc.forecasts.array().rowwise() * panel.sds.transpose().array()).rowwise() +
          panel.means.transpose().array();
    // NaN rows mark failed origins; bypass the strict panel validator.
    {
      std::ostringstream body;
      for (const auto& c : stamps(est.seed, hash)) body << "# " << c << "\n";
      const bool has_dates = !out_panel.dates.empty();
      if (has_dates) body << "date";
      for (std::size_t j = 0; j < out_panel.labels.size(); ++j) {
        if (has_dates || j > 0) body << ",";
        body << out_panel.labels[j];
      }
      body << "\n";
      for (Eigen::Index i = 0; i < out_panel.y.rows(); ++i) {
        if (has_dates) body << out_panel.dates[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < out_panel.y.cols(); ++j) {
          if (has_dates || j > 0) body << ",";
          body << sdfactor::detail::format_double(out_panel.y(i, j));
        }
        body << "\n";
      }
      sdfactor::detail::atomic_write(out_forecasts, body.str());
    }

    json summary;
    summary["window"] = window;
    summary["n_forecasts"] = fc.forecasts.rows();
    summary["mse"] = fc.mse;
    summary["failed_origins"] = fc.failed_origins;
    summary["cold_start"] = cold_start;
    summary["standardized"] = standardize;
    summary["fixed_params"] = fixed.has_value();
    stamp_json(summary, est.seed, hash);
    sdfactor::write_json(out_summary, summary);
    std::cout << "wrote " << out_forecasts << " and " << out_summary << " ("
              << fc.forecasts.rows() << " forecasts, mse=" << fc.mse << ")\n";
  } catch (const std::exception& e) {
    return fail(kNumericExit, "forecast", e.what());
  }
  return kOk;
}

// ---------------------------------------------------------------- montecarlo

int run_montecarlo(const Flags& f) {
  json cfg;
  std::string mode, out_dir;
  std::optional<sdfactor::McDesign> design;
  std::optional<sdfactor::TvMcDesign> tv_design;
  sdfactor::EstimationConfig est;
  try {
    cfg = load_config(f.config_path);
    put(cfg, "out_dir", f.out_dir);
    put(cfg, "mode", f.mode);
    if (!cfg.contains("design")) throw sdfactor::Error("config needs a 'design' block");
    if (f.seed) cfg["design"]["seed"] = *f.seed;
    if (!cfg.contains("estimation")) cfg["estimation"] = json::object();
    put(cfg["estimation"], "threads", f.threads);

    mode = cfg.value("mode", "static");
    if (mode != "static" && mode != "tv")
      throw sdfactor::Error("mode must be 'static' or 'tv'");
    out_dir = cfg.value("out_dir", std::string("."));
    if (mode == "static")
      design = sdfactor::mc_design_from_json(cfg.at("design"));
    else
      tv_design = sdfactor::tv_mc_design_from_json(cfg.at("design"));
    est = sdfactor::estimation_config_from_json(cfg.at("estimation"));
    est.n_factors = mode == "static" ? static_cast<int>(design->dgp.r())
                                     : static_cast<int>(tv_design->dgp.r());
  } catch (const std::exception& e) {
    return fail(kConfigExit, "config", e.what());
  }

  const std::uint64_t hash = effective_hash(cfg);
  const std::uint64_t seed = mode == "static" ? design->seed : tv_design->seed;
  const auto out = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  try {
    const sdfactor::McResult res = mode == "static" ? sdfactor::run_mc(*design, est)
                                                    : sdfactor::run_tv_mc(*tv_design, est);

    sdfactor::CsvTable estimates;
    estimates.labels = {"sample_size", "replication", "ok", "converged", "loglik",
                        "lambda_frobenius"};
    for (const auto& name : res.scalar_names) estimates.labels.push_back(name);
    estimates.values.resize(static_cast<Eigen::Index>(res.records.size()),
                            static_cast<Eigen::Index>(estimates.labels.size()));
    for (std::size_t i = 0; i < res.records.size(); ++i) {
      const auto& rec = res.records[i];
      const Eigen::Index row = static_cast<Eigen::Index>(i);
      estimates.values(row, 0) = static_cast<double>(rec.sample_size);
      estimates.values(row, 1) = rec.replication;
      estimates.values(row, 2) = rec.ok ? 1.0 : 0.0;
      estimates.values(row, 3) = rec.converged ? 1.0 : 0.0;
      estimates.values(row, 4) = rec.total_loglik;
      estimates.values(row, 5) = rec.lambda_frobenius;
      for (Eigen::Index k = 0; k < rec.scalars.size(); ++k)
        estimates.values(row, 6 + k) = rec.scalars(k);
    }
    sdfactor::write_table_csv(out("estimates.csv"), estimates, stamps(seed, hash));

    json summary;
    summary["mode"] = mode;
    summary["scalar_names"] = res.scalar_names;
    summary["sizes"] = json::array();
    Eigen::Index kde_rows = 0;
    for (const auto& s : res.summaries) {
      json sj;
      sj["sample_size"] = s.sample_size;
      sj["failures"] = s.failures;
      sj["lambda_frobenius_median"] = s.lambda_frobenius_median;
      sj["scalars"] = json::array();
      for (const auto& sc : s.scalars) {
        json scj;
        scj["name"] = sc.name;
        scj["truth"] = sc.truth;
        scj["median"] = sc.median_estimate;
        scj["rmse"] = sc.rmse;
        scj["kde_bandwidth"] = sc.kde.bandwidth;
        sj["scalars"].push_back(std::move(scj));
        kde_rows += static_cast<Eigen::Index>(sc.kde.grid.size());
      }
      summary["sizes"].push_back(std::move(sj));
    }
    stamp_json(summary, seed, hash);
    sdfactor::write_json(out("summary.json"), summary);

    sdfactor::CsvTable kde;
    kde.labels = {"sample_size", "scalar_index", "grid", "density"};
    kde.values.resize(kde_rows, 4);
    Eigen::Index row = 0;
    for (const auto& s : res.summaries)
      for (std::size_t k = 0; k < s.scalars.size(); ++k)
        for (std::size_t g = 0; g < s.scalars[k].kde.grid.size(); ++g) {
          kde.values(row, 0) = static_cast<double>(s.sample_size);
          kde.values(row, 1) = static_cast<double>(k);
          kde.values(row, 2) = s.scalars[k].kde.grid[g];
          kde.values(row, 3) = s.scalars[k].kde.density[g];
          ++row;
        }
    sdfactor::write_table_csv(out("kde.csv"), kde, stamps(seed, hash));
    std::cout << "wrote " << out("estimates.csv") << ", " << out("summary.json") << ", "
              << out("kde.csv") << " (" << res.records.size() << " replications)\n";
  } catch (const std::exception& e) {
    return fail(kNumericExit, "montecarlo", e.what());
  }
  return kOk;
}

// ------------------------------------------------------------------ diagnose

int run_diagnose(const Flags& f) {
  json cfg;
  std::string data_path, params_path, out_csv, out_json;
  std::uint64_t seed = 1;
  int n_random = 3;
  bool standardize = false;
  try {
    cfg = load_config(f.config_path);
    put(cfg, "data", f.data);
    put(cfg, "params", f.params_path);
    put(cfg, "seed", f.seed);
    if (f.standardize) cfg["standardize"] = true;
    data_path = cfg.value("data", std::string());
    params_path = cfg.value("params", std::string());
    if (data_path.empty() || params_path.empty())
      throw sdfactor::Error("config needs 'data' and 'params' paths");
    out_csv = cfg.value("out_csv", std::string("diagnose.csv"));
    out_json = cfg.value("out_json", std::string("diagnose.json"));
    seed = cfg.value("seed", std::uint64_t{1});
    n_random = cfg.value("random_transforms", 3);
    standardize = cfg.value("standardize", false);
    if (n_random < 0 || n_random > 64)
      throw sdfactor::Error("'random_transforms' must lie in [0, 64]");
  } catch (const std::exception& e) {
    return fail(kConfigExit, "config", e.what());
  }

  sdfactor::PanelData panel;
  sdfactor::StaticParams params;
  try {
    panel = sdfactor::load_panel_csv(data_path);
    if (standardize) panel = panel.standardize();
    const json pj = sdfactor::read_json(params_path);
    params = sdfactor::static_params_from_json(pj.contains("params") ? pj.at("params") : pj);
    if (params.n() != panel.n())
      throw sdfactor::Error("fitted model width does not match the panel");
  } catch (const std::exception& e) {
    return fail(kDataExit, "data", e.what());
  }

  const std::uint64_t hash = effective_hash(cfg);
  try {
    const Eigen::Index r = params.r();
    struct Probe {
      std::string name;
      Eigen::MatrixXd T;
    };
    std::vector<Probe> probes;
    probes.push_back({"identity", Eigen::MatrixXd::Identity(r, r)});
    probes.push_back({"scalar_q2", 2.0 * Eigen::MatrixXd::Identity(r, r)});
    sdfactor::Rng rng(seed, 7001);
    for (int k = 0; k < n_random; ++k) {
      Eigen::VectorXd d(r);
      for (Eigen::Index i = 0; i < r; ++i) d(i) = rng.uniform(0.5, 2.0);
      probes.push_back({"random_diagonal_" + std::to_string(k + 1),
                        Eigen::MatrixXd(d.asDiagonal())});
    }

    json rows = json::array();
    sdfactor::CsvTable table;
    table.labels = {"transform",  "rule_beta",        "loglik_original",
                    "loglik_transformed", "loglik_gap", "max_path_divergence",
                    "commutation_residual", "equivalent"};
    table.values.resize(static_cast<Eigen::Index>(probes.size()) * 2, 8);
    Eigen::Index row = 0;
    for (std::size_t pi = 0; pi < probes.size(); ++pi)
      for (int rule : {0, 1}) {
        const sdfactor::TransformReport rep =
            sdfactor::transform_equivalence_report(panel, params, probes[pi].T, rule);
        const bool equal = rep.verdict == sdfactor::TransformVerdict::Equivalent;
        json jr;
        jr["transform"] = probes[pi].name;
        jr["rule_beta"] = rule;
        jr["beta"] = rep.beta;
        jr["loglik_original"] = rep.loglik_original;
        jr["loglik_transformed"] = rep.loglik_transformed;
        jr["max_path_divergence"] = rep.max_path_divergence;
        jr["commutation_residual"] = rep.commutation_residual;
        jr["verdict"] = sdfactor::verdict_name(rep.verdict);
        rows.push_back(std::move(jr));
        table.values(row, 0) = static_cast<double>(pi);
        table.values(row, 1) = rule;
        table.values(row, 2) = rep.loglik_original;
        table.values(row, 3) = rep.loglik_transformed;
        table.values(row, 4) = rep.loglik_transformed - rep.loglik_original;
        table.values(row, 5) = rep.max_path_divergence;
        table.values(row, 6) = rep.commutation_residual;
        table.values(row, 7) = equal ? 1.0 : 0.0;
        ++row;
      }

    std::vector<std::string> comments = stamps(seed, hash);
    for (std::size_t pi = 0; pi < probes.size(); ++pi)
      comments.push_back("transform " + std::to_string(pi) + "=" + probes[pi].name);
    sdfactor::write_table_csv(out_csv, table, comments);

    json out;
    out["beta"] = params.beta;
    out["reports"] = std::move(rows);
    stamp_json(out, seed, hash);
    sdfactor::write_json(out_json, out);
    std::cout << "wrote " << out_csv << " and " << out_json << " (" << probes.size()
              << " transforms x 2 rules)\n";
  } catch (const std::exception& e) {
    return fail(kNumericExit, "diagnosis", e.what());
  }
  return kOk;
}

// ------------------------------------------------------------------- compare

int run_compare(const Flags& f) {
  json cfg;
  std::vector<std::string> files;
  std::vector<std::pair<std::string, std::string>> nests;
  std::string out_table, out_matrix, out_json;
  std::uint64_t seed = 1;
  try {
    cfg = load_config(f.config_path);
    if (!f.fit_files.empty()) cfg["fits"] = f.fit_files;
    if (!f.nests.empty()) cfg["nests"] = f.nests;
    put(cfg, "seed", f.seed);
    if (cfg.contains("fits")) files = cfg.at("fits").get<std::vector<std::string>>();
    if (files.empty()) throw sdfactor::Error("compare needs at least one fitted-model file");
    for (const auto& spec : cfg.value("nests", std::vector<std::string>{})) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw sdfactor::Error("nest spec must be 'restricted=full', got '" + spec + "'");
      nests.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }
    out_table = cfg.value("out_table", std::string("comparison.csv"));
    out_matrix = cfg.value("out_matrix", std::string("lr_matrix.csv"));
    out_json = cfg.value("out_json", std::string("compare_summary.json"));
    seed = cfg.value("seed", std::uint64_t{1});
  } catch (const std::exception& e) {
    return fail(kConfigExit, "config", e.what());
  }

  struct Fit {
    std::string label;
    double loglik = 0.0;
    int free_params = 0;
    Eigen::Index T = 0;
    json doc;
  };
  std::vector<Fit> fits;
  Eigen::Index T_common = 0;
  try {
    for (const auto& path : files) {
      const json j = sdfactor::read_json(path);
      Fit fit;
      fit.label = label_of(path);
      fit.loglik = j.at("loglik").get<double>();
      fit.free_params = j.at("free_params").get<int>();
      fit.T = j.value("T", Eigen::Index{0});
      fit.doc = j;
      fits.push_back(std::move(fit));
    }
    // Information criteria need the sample length; fits made by this tool
    // carry it, otherwise it must arrive via config.
    T_common = cfg.value("T", Eigen::Index{0});
    for (auto& fit : fits) {
      if (fit.T == 0) fit.T = T_common;
      if (fit.T < 1)
        throw sdfactor::Error("fit '" + fit.label +
                              "' lacks a sample length; pass 'T' in the config");
    }
  } catch (const std::exception& e) {
    return fail(kDataExit, "data", e.what());
  }

  auto find_fit = [&](const std::string& label) -> const Fit* {
    for (const auto& fit : fits)
      if (fit.label == label) return &fit;
    return nullptr;
  };
  for (const auto& [rl, fl] : nests) {
    if (find_fit(rl) == nullptr || find_fit(fl) == nullptr)
      return fail(kConfigExit, "config",
                  "nest '" + rl + "=" + fl + "' names an unknown fit label");
  }

  const std::uint64_t hash = effective_hash(cfg);
  try {
    std::ostringstream body;
    for (const auto& c : stamps(seed, hash)) body << "# " << c << "\n";
    body << "model,loglik,free_params,aic,bic\n";
    json jfits = json::array();
    for (const auto& fit : fits) {
      const auto [aic, bic] =
          sdfactor::information_criteria(fit.loglik, fit.free_params, fit.T);
      body << fit.label << "," << sdfactor::detail::format_double(fit.loglik) << ","
           << fit.free_params << "," << sdfactor::detail::format_double(aic) << ","
           << sdfactor::detail::format_double(bic) << "\n";
      json jf;
      jf["model"] = fit.label;
      jf["loglik"] = fit.loglik;
      jf["free_params"] = fit.free_params;
      jf["aic"] = aic;
      jf["bic"] = bic;
      jfits.push_back(std::move(jf));
    }
    sdfactor::detail::atomic_write(out_table, body.str());

    const std::size_t m = fits.size();
    Eigen::MatrixXd pmat =
        Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m),
                                  std::numeric_limits<double>::quiet_NaN());
    json jtests = json::array();
    for (const auto& [rl, fl] : nests) {
      const Fit* restricted = find_fit(rl);
      const Fit* full = find_fit(fl);
      const int df = full->free_params - restricted->free_params;
      const sdfactor::LrResult lr = sdfactor::lr_test(restricted->loglik, full->loglik, df);
      const auto ri = static_cast<Eigen::Index>(restricted - fits.data());
      const auto fi = static_cast<Eigen::Index>(full - fits.data());
      pmat(ri, fi) = lr.p_value;
      json jt;
      jt["restricted"] = rl;
      jt["full"] = fl;
      jt["statistic"] = lr.statistic;
      jt["df"] = lr.df;
      jt["p_value"] = lr.p_value;
      jtests.push_back(std::move(jt));
    }

    // Rows are restricted models, columns the nesting alternatives.
    std::ostringstream mbody;
    for (const auto& c : stamps(seed, hash)) mbody << "# " << c << "\n";
    mbody << "model";
    for (const auto& fit : fits) mbody << "," << fit.label;
    mbody << "\n";
    for (std::size_t i = 0; i < m; ++i) {
      mbody << fits[i].label;
      for (std::size_t j = 0; j < m; ++j)
        mbody << ","
              << sdfactor::detail::format_double(
                     pmat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      mbody << "\n";
    }
    sdfactor::detail::atomic_write(out_matrix, mbody.str());

    json out;
    out["models"] = std::move(jfits);
    out["lr_tests"] = std::move(jtests);
    stamp_json(out, seed, hash);
    sdfactor::write_json(out_json, out);
    std::cout << "wrote " << out_table << ", " << out_matrix << ", " << out_json << " ("
              << m << " models, " << nests.size() << " nestings)\n";
  } catch (const std::exception& e) {
    return fail(kNumericExit, "comparison", e.what());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"score-driven dynamic factor models with Student-t observations"};
  app.require_subcommand(1);
  int exit_code = kOk;

  Flags sim_f;
  auto* sim = app.add_subcommand("simulate", "draw one path from a configured model");
  add_common(sim, sim_f);
  sim->add_option("--T", sim_f.T, "path length");
  sim->add_option("--mode", sim_f.mode, "static or tv");
  sim->add_option("--out", sim_f.out, "output panel CSV");
  sim->callback([&]() { exit_code = run_simulate(sim_f); });

  Flags est_f;
  auto* est = app.add_subcommand("estimate", "fit the model to a CSV panel");
  add_common(est, est_f);
  est->add_option("--data", est_f.data, "panel CSV path");
  est->add_option("--r", est_f.r, "number of factors");
  est->add_option("--restriction", est_f.restriction,
                  "loading restriction kind (full, lower_triangular, ...)");
  est->add_option("--groups", est_f.groups_path, "group file, one integer per series");
  est->add_option("--beta", est_f.beta, "score-scaling exponent in [0, 1]");
  est->add_option("--mode", est_f.mode, "static, tv, or tv_targeted");
  est->add_option("--restarts", est_f.restarts, "perturbed restarts");
  est->add_option("--max-iterations", est_f.max_iterations, "optimizer iteration cap");
  est->add_flag("--standardize", est_f.standardize, "z-score each series first");
  est->add_option("--out", est_f.out, "output fit JSON");
  est->callback([&]() { exit_code = run_estimate(est_f); });

  Flags fc_f;
  auto* fc = app.add_subcommand("forecast", "rolling one-step-ahead forecasts");
  add_common(fc, fc_f);
  fc->add_option("--data", fc_f.data, "panel CSV path");
  fc->add_option("--window", fc_f.window, "rolling window length");
  fc->add_option("--r", fc_f.r, "number of factors");
  fc->add_option("--restriction", fc_f.restriction, "loading restriction kind");
  fc->add_option("--beta", fc_f.beta, "score-scaling exponent");
  fc->add_option("--params", fc_f.params_path, "fitted-model JSON, skips re-estimation");
  fc->add_flag("--cold-start", fc_f.cold_start, "re-initialize every origin (concurrent)");
  fc->add_flag("--standardize", fc_f.standardize, "z-score each series first");
  fc->add_option("--out", fc_f.out, "output forecast CSV");
  fc->callback([&]() { exit_code = run_forecast(fc_f); });

  Flags mc_f;
  auto* mc = app.add_subcommand("montecarlo", "replication study from a design config");
  add_common(mc, mc_f);
  mc->add_option("--mode", mc_f.mode, "static or tv");
  mc->add_option("--out-dir", mc_f.out_dir, "output directory");
  mc->callback([&]() { exit_code = run_montecarlo(mc_f); });

  Flags di_f;
  auto* di = app.add_subcommand("diagnose", "transform-equivalence report for a fitted model");
  add_common(di, di_f);
  di->add_option("--data", di_f.data, "panel CSV path");
  di->add_option("--params", di_f.params_path, "fitted-model JSON");
  di->add_flag("--standardize", di_f.standardize, "z-score each series first");
  di->callback([&]() { exit_code = run_diagnose(di_f); });

  Flags cp_f;
  auto* cp = app.add_subcommand("compare", "information criteria and LR tests across fits");
  add_common(cp, cp_f);
  cp->add_option("fits", cp_f.fit_files, "fitted-model JSON files");
  cp->add_option("--nest", cp_f.nests, "declared nesting 'restricted=full' (repeatable)");
  cp->callback([&]() { exit_code = run_compare(cp_f); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }
  return exit_code;
}
