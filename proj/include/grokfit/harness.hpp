#pragma once

// Experiment harness behind the `grokfit` command-line tool: linear and MLP
// sweeps, fitting of external curve files, plot-data emission and schema
// self-checks. Every command returns a process exit status:
//   0 success, 1 partial or experiment failure, 2 usage / configuration error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "grokfit/curvefit.hpp"
#include "grokfit/error.hpp"
#include "grokfit/io.hpp"
#include "grokfit/linear_dynamics.hpp"
#include "grokfit/metrics.hpp"
#include "grokfit/parallel.hpp"
#include "grokfit/parity_mlp.hpp"
#include "grokfit/svg.hpp"

namespace grokfit::harness {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;

struct CommonOptions {
  fs::path out_dir;
  std::int64_t seed = 0;
  std::size_t workers = 1;
  bool overwrite = false;
  bool resume = false;
  bool no_svg = false;
};

inline const std::vector<std::string>& metrics_keys() {
  static const std::vector<std::string> keys = {
      "lambda_or_input_size", "seed",         "m",          "r_rel",    "r_abs",   "s_train",
      "s_gen",                "t_star_train", "t_star_gen", "rmse_train", "rmse_gen"};
  return keys;
}

/// One metrics JSON-lines record. `label` and `curve_file` locate the run's curves.
inline Json metrics_record(double param, std::int64_t seed, const GrokkingMetrics& g, const std::string& label,
                           const std::string& curve_file) {
  Json j;
  j["lambda_or_input_size"] = param;
  j["seed"] = seed;
  j["m"] = g.m;
  j["r_rel"] = g.r_rel;
  j["r_abs"] = g.r_abs;
  j["s_train"] = g.fit_train.s;
  j["s_gen"] = g.fit_gen.s;
  j["t_star_train"] = g.fit_train.t_star;
  j["t_star_gen"] = g.fit_gen.t_star;
  j["rmse_train"] = g.fit_train.rmse_window;
  j["rmse_gen"] = g.fit_gen.rmse_window;
  j["label"] = label;
  j["curve_file"] = curve_file;
  return j;
}

inline Json fit_json(const ErfFit& f) {
  Json j;
  j["s"] = f.s;
  j["t_star"] = f.t_star;
  j["a"] = f.a;
  j["b"] = f.b;
  j["rmse_window"] = f.rmse_window;
  j["n_window_points"] = f.n_window_points;
  return j;
}

inline Json spec_json(const FitSpec& spec) {
  Json j;
  j["c"] = spec.baseline_accuracy;
  j["d"] = spec.max_accuracy;
  j["theta"] = spec.theta;
  j["transition_margin"] = spec.transition_margin;
  j["clamp_delta"] = spec.clamp_delta;
  return j;
}

inline FitSpec spec_from_json(const Json& j) {
  FitSpec s;
  s.baseline_accuracy = j.at("c").get<double>();
  s.max_accuracy = j.at("d").get<double>();
  s.theta = j.value("theta", 0.0);
  s.transition_margin = j.value("transition_margin", 0.05);
  s.clamp_delta = j.value("clamp_delta", 1e-4);
  return s;
}

inline std::string jsonl(const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + '\n';
  return out;
}

inline std::vector<Json> read_jsonl(const fs::path& path) {
  std::vector<Json> out;
  std::istringstream in(io::read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw ParseError(path.filename().string() + ": " + e.what(), line_no);
    }
  }
  return out;
}

inline FitSpec fit_spec_from_config(const io::Config& cfg, double c, double d) {
  FitSpec spec;
  spec.baseline_accuracy = c;
  spec.max_accuracy = d;
  spec.transition_margin = cfg.get_double("transition_margin", spec.transition_margin);
  spec.clamp_delta = cfg.get_double("clamp_delta", spec.clamp_delta);
  try {
    spec.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  return spec;
}

/// Trend lines in log-log space over rows with positive m.
inline Json trends_json(const std::vector<GrokkingMetrics>& rows, std::ostream& log) {
  std::vector<std::pair<double, double>> rel, abs;
  std::size_t skipped = 0;
  for (const auto& g : rows) {
    if (!(g.m > 0.0)) {
      ++skipped;
      continue;
    }
    rel.emplace_back(g.m, g.r_rel);
    abs.emplace_back(g.m, g.r_abs);
  }
  if (skipped > 0) log << "warning: " << skipped << " row(s) with m <= 0 left out of log-log trends\n";
  Json j = Json::object();
  if (rel.size() < 2) {
    log << "warning: fewer than two rows with m > 0; no log-log trends\n";
    return j;
  }
  auto one = [](const TrendFit& t) {
    Json o;
    o["slope"] = t.slope;
    o["intercept"] = t.intercept;
    o["r_squared"] = t.r_squared;
    o["n_points"] = t.n_points;
    return o;
  };
  j["m_vs_r_rel"] = one(loglog_fit(rel));
  j["m_vs_r_abs"] = one(loglog_fit(abs));
  return j;
}

inline std::string trends_csv(const Json& trends) {
  std::string out = "pair,slope,intercept,r_squared,n_points\n";
  for (const auto& [name, t] : trends.items())
    out += name + ',' + io::format_double(t["slope"].get<double>()) + ',' +
           io::format_double(t["intercept"].get<double>()) + ',' +
           io::format_double(t["r_squared"].get<double>()) + ',' +
           std::to_string(t["n_points"].get<std::size_t>()) + '\n';
  return out;
}

namespace detail {

inline void check_free(const std::vector<fs::path>& targets, bool overwrite) {
  if (overwrite) return;
  for (const auto& p : targets)
    if (fs::exists(p)) throw UsageError("output file exists: " + p.string() + " (pass --overwrite)");
}

inline std::string linear_label(double lambda) { return "lambda" + io::format_label(lambda); }

inline std::string mlp_stem(std::size_t spurious, std::int64_t seed) {
  return "mlp_s" + std::to_string(spurious) + "_seed" + std::to_string(seed);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// linear-sweep

/// Config keys: lambda_list, eta0, epsilon (required); grid_points,
/// transition_margin, oracle_d_in, oracle_seeds (optional).
inline int cmd_linear_sweep(const io::Config& cfg, const CommonOptions& opt, std::ostream& log) {
  std::vector<double> lambdas;
  linear::LinearConfig tmpl;
  FitSpec spec;
  std::size_t oracle_d_in = 0, oracle_seeds = 0;
  try {
    lambdas = cfg.get_double_list("lambda_list");
    tmpl.eta0 = cfg.get_double("eta0");
    tmpl.epsilon = cfg.get_double("epsilon");
    tmpl.grid_points = cfg.get_count("grid_points", tmpl.grid_points);
    oracle_d_in = cfg.get_count("oracle_d_in", 0);
    oracle_seeds = cfg.get_count("oracle_seeds", 0);
    spec = fit_spec_from_config(cfg, 0.0, 1.0);
    linear::check_lambda_list(lambdas);
    for (double l : lambdas) {
      auto c = tmpl;
      c.lambda = l;
      c.validate();
    }
    if (opt.out_dir.empty()) throw UsageError("--out is required");
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path out = opt.out_dir;
  std::vector<fs::path> targets = {out / "run_manifest.json", out / "metrics.jsonl", out / "summary.csv",
                                   out / "trends.csv"};
  for (double l : lambdas) {
    targets.push_back(out / ("linear_" + detail::linear_label(l) + ".csv"));
    if (oracle_d_in > 0 && oracle_seeds > 0) targets.push_back(out / ("oracle_" + detail::linear_label(l) + ".csv"));
  }
  try {
    detail::check_free(targets, opt.overwrite);
    fs::create_directories(out);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Json manifest;
  manifest["kind"] = "linear-sweep";
  manifest["fit_spec"] = spec_json(spec);
  manifest["seed"] = opt.seed;
  Json cfg_json = Json::object();
  for (const auto& [k, v] : cfg.values()) cfg_json[k] = v;
  manifest["config"] = cfg_json;
  io::atomic_write(out / "run_manifest.json", manifest.dump(2) + '\n', true);

  std::vector<linear::SweepEntry> entries(lambdas.size());
  parallel_for(lambdas.size(), opt.workers,
               [&](std::size_t i) { entries[i] = linear::sweep_point(lambdas[i], tmpl, spec); });

  std::vector<Json> records;
  std::vector<GrokkingMetrics> ok_rows;
  std::string summary = "lambda,status,m,r_rel,r_abs\n";
  bool all_ok = true;
  for (const auto& e : entries) {
    const std::string label = detail::linear_label(e.lambda);
    if (e.curves) {
      const auto& tr = e.curves->train;
      const auto& va = e.curves->validation;
      io::atomic_write(out / ("linear_" + label + ".csv"), io::curve_csv(tr.epochs(), &tr.values(), &va.values()),
                       true);
      for (const auto& w : e.curves->warnings) log << "warning [" << label << "]: " << w << '\n';
    }
    if (e.metrics) {
      records.push_back(metrics_record(e.lambda, opt.seed, *e.metrics, label, "linear_" + label + ".csv"));
      ok_rows.push_back(*e.metrics);
      summary += io::format_double(e.lambda) + ",ok," + io::format_double(e.metrics->m) + ',' +
                 io::format_double(e.metrics->r_rel) + ',' + io::format_double(e.metrics->r_abs) + '\n';
    } else {
      all_ok = false;
      log << "lambda " << e.lambda << " failed: " << e.error << '\n';
      summary += io::format_double(e.lambda) + ",failed,,,\n";
    }
  }
  io::atomic_write(out / "metrics.jsonl", jsonl(records), true);
  io::atomic_write(out / "summary.csv", summary, true);
  io::atomic_write(out / "trends.csv", trends_csv(trends_json(ok_rows, log)), true);

  if (oracle_d_in > 0 && oracle_seeds > 0) {
    for (double l : lambdas) {
      auto c = tmpl;
      c.lambda = l;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = 0; k < oracle_seeds; ++k) seeds.push_back(static_cast<std::uint64_t>(opt.seed) + k);
      try {
        const auto oc = linear::finite_size_oracle(c, oracle_d_in, seeds, 40, opt.workers);
        std::string csv = "t,eta0_t,ltr_approx,ltr_exact_mean,ratio\n";
        for (std::size_t i = 0; i < oc.times.size(); ++i)
          csv += io::format_double(oc.times[i]) + ',' + io::format_double(c.eta0 * oc.times[i]) + ',' +
                 io::format_double(oc.ltr_approx[i]) + ',' + io::format_double(oc.ltr_exact_mean[i]) + ',' +
                 io::format_double(oc.ltr_exact_mean[i] / oc.ltr_approx[i]) + '\n';
        io::atomic_write(out / ("oracle_" + detail::linear_label(l) + ".csv"), csv, true);
      } catch (const Error& e) {
        all_ok = false;
        log << "oracle for lambda " << l << " failed: " << e.what() << '\n';
      }
    }
  }

  log << "linear-sweep: " << records.size() << '/' << lambdas.size() << " lambda values fitted\n";
  return all_ok ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// mlp-sweep

inline Json parity_config_json(const parity::ParityConfig& c) {
  Json j;
  j["parity_bits"] = c.parity_bits;
  j["spurious_dims"] = c.spurious_dims;
  j["train_size"] = c.train_size;
  j["val_size"] = c.val_size;
  j["hidden_width"] = c.hidden_width;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["max_epochs"] = c.max_epochs;
  j["record_every"] = c.record_every;
  j["saturation_patience"] = c.saturation_patience;
  j["seed"] = c.seed;
  return j;
}

inline parity::ParityConfig parity_config_from_json(const Json& j) {
  parity::ParityConfig c;
  c.parity_bits = j.at("parity_bits").get<std::size_t>();
  c.spurious_dims = j.at("spurious_dims").get<std::size_t>();
  c.train_size = j.at("train_size").get<std::size_t>();
  c.val_size = j.at("val_size").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.record_every = j.at("record_every").get<std::size_t>();
  c.saturation_patience = j.at("saturation_patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Per-run JSON: config, metrics (or fit error) and the curve file name.
inline Json run_record_json(const parity::RunRecord& r, const std::string& curve_file) {
  Json j;
  j["config"] = parity_config_json(r.config);
  j["curve_file"] = curve_file;
  j["n_records"] = r.epochs.size();
  if (r.metrics) {
    Json m;
    m["m"] = r.metrics->m;
    m["r_rel"] = r.metrics->r_rel;
    m["r_abs"] = r.metrics->r_abs;
    m["fit_train"] = fit_json(r.metrics->fit_train);
    m["fit_gen"] = fit_json(r.metrics->fit_gen);
    j["metrics"] = m;
  } else {
    j["metrics"] = nullptr;
    j["fit_error"] = r.fit_error;
  }
  return j;
}

inline ErfFit fit_from_json(const Json& j) {
  ErfFit f;
  f.s = j.at("s").get<double>();
  f.t_star = j.at("t_star").get<double>();
  f.a = j.at("a").get<double>();
  f.b = j.at("b").get<double>();
  f.rmse_window = j.at("rmse_window").get<double>();
  f.n_window_points = j.at("n_window_points").get<std::size_t>();
  return f;
}

/// Reloads a persisted run (used by --resume).
inline parity::RunRecord load_run_record(const fs::path& json_path) {
  const Json j = Json::parse(io::read_file(json_path));
  parity::RunRecord r;
  r.config = parity_config_from_json(j.at("config"));
  const auto table = io::read_curve_csv(json_path.parent_path() / j.at("curve_file").get<std::string>());
  if (!table.acc_train || !table.acc_val) throw ParseError("run curve file lacks a column", 1);
  r.epochs = table.epochs;
  r.acc_train = *table.acc_train;
  r.acc_val = *table.acc_val;
  if (!j.at("metrics").is_null()) {
    const auto& m = j.at("metrics");
    r.metrics = GrokkingMetrics{m.at("m").get<double>(), m.at("r_rel").get<double>(), m.at("r_abs").get<double>(),
                                fit_from_json(m.at("fit_train")), fit_from_json(m.at("fit_gen"))};
  } else {
    r.fit_error = j.value("fit_error", std::string("unknown"));
  }
  return r;
}

/// Config keys: spurious_list, seeds (required); parity_bits, train_size,
/// val_size, hidden_width, learning_rate, weight_decay, max_epochs,
/// record_every, saturation_patience, transition_margin (optional).
/// Run seeds are the listed seeds offset by --seed.
inline int cmd_mlp_sweep(const io::Config& cfg, const CommonOptions& opt, std::ostream& log) {
  parity::ParityConfig base;
  std::vector<std::size_t> spurious;
  std::vector<std::uint64_t> seeds;
  FitSpec spec;
  try {
    for (auto v : cfg.get_int_list("spurious_list")) {
      if (v < 0) throw UsageError("spurious_list entries must be non-negative");
      spurious.push_back(static_cast<std::size_t>(v));
    }
    for (auto v : cfg.get_int_list("seeds")) seeds.push_back(static_cast<std::uint64_t>(v + opt.seed));
    base.parity_bits = cfg.get_count("parity_bits", base.parity_bits);
    base.train_size = cfg.get_count("train_size", base.train_size);
    base.val_size = cfg.get_count("val_size", base.val_size);
    base.hidden_width = cfg.get_count("hidden_width", base.hidden_width);
    base.learning_rate = cfg.get_double("learning_rate", base.learning_rate);
    base.weight_decay = cfg.get_double("weight_decay", base.weight_decay);
    base.max_epochs = cfg.get_count("max_epochs", base.max_epochs);
    base.record_every = cfg.get_count("record_every", base.record_every);
    base.saturation_patience = cfg.get_count("saturation_patience", base.saturation_patience);
    spec = fit_spec_from_config(cfg, 0.5, 1.0);
    for (auto sp : spurious) {
      auto c = base;
      c.spurious_dims = sp;
      c.validate();
    }
    if (opt.out_dir.empty()) throw UsageError("--out is required");
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path out = opt.out_dir;
  std::vector<fs::path> summary_targets = {out / "run_manifest.json", out / "metrics.jsonl", out / "summary.csv",
                                           out / "summary.json", out / "trends.csv"};
  std::vector<fs::path> unit_targets;
  for (auto sp : spurious)
    for (auto seed : seeds) {
      const auto stem = detail::mlp_stem(sp, static_cast<std::int64_t>(seed));
      unit_targets.push_back(out / (stem + ".json"));
      unit_targets.push_back(out / (stem + ".csv"));
    }
  try {
    if (!opt.resume) {
      detail::check_free(summary_targets, opt.overwrite);
      detail::check_free(unit_targets, opt.overwrite);
    }
    fs::create_directories(out);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  Json manifest;
  manifest["kind"] = "mlp-sweep";
  manifest["fit_spec"] = spec_json(spec);
  manifest["seed"] = opt.seed;
  Json cfg_json = Json::object();
  for (const auto& [k, v] : cfg.values()) cfg_json[k] = v;
  manifest["config"] = cfg_json;
  io::atomic_write(out / "run_manifest.json", manifest.dump(2) + '\n', true);

  struct Unit {
    std::size_t spurious;
    std::uint64_t seed;
  };
  std::vector<Unit> units;
  for (auto sp : spurious)
    for (auto seed : seeds) units.push_back({sp, seed});

  std::vector<parity::RunRecord> records(units.size());
  std::vector<bool> have(units.size(), false);
  if (opt.resume) {
    for (std::size_t i = 0; i < units.size(); ++i) {
      const auto json_path = out / (detail::mlp_stem(units[i].spurious, static_cast<std::int64_t>(units[i].seed)) + ".json");
      if (!fs::exists(json_path)) continue;
      try {
        records[i] = load_run_record(json_path);
        have[i] = true;
        log << "resumed " << json_path.filename().string() << '\n';
      } catch (const std::exception& e) {
        log << "warning: cannot reuse " << json_path.filename().string() << ": " << e.what() << '\n';
      }
    }
  }

  // Metrics lines are appended as units finish and rewritten in input order at the end.
  std::mutex mu;
  std::vector<Json> progress;
  auto persist = [&](std::size_t i, const parity::RunRecord& r) {
    const auto stem = detail::mlp_stem(units[i].spurious, static_cast<std::int64_t>(units[i].seed));
    io::atomic_write(out / (stem + ".csv"), io::curve_csv(r.epochs, &r.acc_train, &r.acc_val), true);
    io::atomic_write(out / (stem + ".json"), run_record_json(r, stem + ".csv").dump(2) + '\n', true);
    std::lock_guard lock(mu);
    if (r.metrics) {
      progress.push_back(metrics_record(static_cast<double>(r.config.input_dim()),
                                        static_cast<std::int64_t>(r.config.seed), *r.metrics, stem, stem + ".csv"));
      io::atomic_write(out / "metrics.jsonl", jsonl(progress), true);
    }
  };
  for (std::size_t i = 0; i < units.size(); ++i)
    if (have[i]) persist(i, records[i]);

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (!have[i]) todo.push_back(i);
  parallel_for(todo.size(), opt.workers, [&](std::size_t k) {
    const std::size_t i = todo[k];
    auto c = base;
    c.spurious_dims = units[i].spurious;
    c.seed = units[i].seed;
    parity::RunRecord r;
    try {
      r = parity::train(c, spec);
    } catch (const parity::DivergenceError& e) {
      r = e.partial();
      r.fit_error = e.what();
    }
    {
      std::lock_guard lock(mu);
      log << detail::mlp_stem(units[i].spurious, static_cast<std::int64_t>(units[i].seed)) << ": "
          << r.epochs.size() << " records, "
          << (r.metrics ? "m=" + io::format_label(r.metrics->m) : "fit failed: " + r.fit_error) << '\n';
    }
    persist(i, r);
    records[i] = std::move(r);
  });

  std::vector<Json> ordered;
  std::vector<GrokkingMetrics> ok_rows;
  std::string summary = "spurious_dims,input_size,seed,status,m,r_rel,r_abs\n";
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& r = records[i];
    const auto stem = detail::mlp_stem(units[i].spurious, static_cast<std::int64_t>(units[i].seed));
    summary += std::to_string(units[i].spurious) + ',' + std::to_string(r.config.input_dim()) + ',' +
               std::to_string(units[i].seed) + ',';
    if (r.metrics) {
      ordered.push_back(metrics_record(static_cast<double>(r.config.input_dim()),
                                       static_cast<std::int64_t>(r.config.seed), *r.metrics, stem, stem + ".csv"));
      ok_rows.push_back(*r.metrics);
      summary += "ok," + io::format_double(r.metrics->m) + ',' + io::format_double(r.metrics->r_rel) + ',' +
                 io::format_double(r.metrics->r_abs) + '\n';
    } else {
      summary += "failed,,,\n";
    }
  }
  const auto sum = parity::summarize(records, seeds.size());
  const Json trends = trends_json(ok_rows, log);
  Json sj;
  sj["n_runs"] = sum.n_runs;
  sj["n_fitted"] = sum.n_fitted;
  sj["fit_fraction"] = sum.n_runs ? static_cast<double>(sum.n_fitted) / static_cast<double>(sum.n_runs) : 0.0;
  sj["spearman_spurious_m"] = sum.rho_spurious_m;
  sj["spearman_m_r_rel"] = sum.rho_m_r_rel;
  sj["spearman_m_r_abs"] = sum.rho_m_r_abs;
  sj["low_confidence"] = sum.low_confidence;
  sj["trends"] = trends;
  io::atomic_write(out / "metrics.jsonl", jsonl(ordered), true);
  io::atomic_write(out / "summary.csv", summary, true);
  io::atomic_write(out / "summary.json", sj.dump(2) + '\n', true);
  io::atomic_write(out / "trends.csv", trends_csv(trends), true);

  log << "mlp-sweep: " << sum.n_fitted << '/' << sum.n_runs << " runs fitted; spearman(m, R_rel) = "
      << sum.rho_m_r_rel << ", spearman(m, R_abs) = " << sum.rho_m_r_abs
      << (sum.low_confidence ? " (low confidence)" : "") << '\n';
  return sum.n_fitted == sum.n_runs ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// fit

/// Fits each accuracy column present in the CSV; prints one JSON object.
inline int cmd_fit(const fs::path& csv_path, double c, double d, const std::optional<fs::path>& json_out,
                   bool overwrite, std::ostream& out, std::ostream& log, double transition_margin = 0.05) {
  FitSpec spec;
  spec.baseline_accuracy = c;
  spec.max_accuracy = d;
  spec.transition_margin = transition_margin;
  io::CurveTable table;
  try {
    spec.validate();
    table = io::read_curve_csv(csv_path);
  } catch (const Error& e) {
    log << "error: " << csv_path.string() << ": " << e.what() << '\n';
    return kExitUsage;
  }

  Json result;
  result["file"] = csv_path.filename().string();
  result["fit_spec"] = spec_json(spec);
  bool ok = true;
  std::optional<ErfFit> ft, fg;
  auto fit_column = [&](const std::vector<double>& values, CurveKind kind, std::optional<ErfFit>& slot) {
    try {
      slot = fit_erf(AccuracyCurve(table.epochs, values, kind), spec);
      return fit_json(*slot);
    } catch (const Error& e) {
      ok = false;
      Json err;
      err["error"] = e.what();
      return err;
    }
  };
  if (table.acc_train) result["train"] = fit_column(*table.acc_train, CurveKind::train, ft);
  if (table.acc_val) result["validation"] = fit_column(*table.acc_val, CurveKind::validation, fg);
  if (ft && fg) {
    const auto g = grokking_metrics(*ft, *fg);
    Json m;
    m["m"] = g.m;
    m["r_rel"] = g.r_rel;
    m["r_abs"] = g.r_abs;
    result["metrics"] = m;
  }
  out << result.dump(2) << '\n';
  if (json_out) {
    try {
      io::atomic_write(*json_out, result.dump(2) + '\n', overwrite);
    } catch (const Error& e) {
      log << "error: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  return ok ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// plotdata

/// Writes plot-ready tables (and SVG charts) for a sweep directory into
/// `plot_dir` (default: <run_dir>/plots).
inline int cmd_plotdata(const fs::path& run_dir, const CommonOptions& opt, std::ostream& log) {
  const fs::path manifest_path = run_dir / "run_manifest.json";
  const fs::path metrics_path = run_dir / "metrics.jsonl";
  if (!fs::exists(metrics_path) || !fs::exists(manifest_path)) {
    log << "error: nothing to plot in " << run_dir.string() << " (no run_manifest.json / metrics.jsonl)\n";
    return kExitPartial;
  }
  std::vector<Json> records;
  FitSpec spec;
  try {
    records = read_jsonl(metrics_path);
    spec = spec_from_json(Json::parse(io::read_file(manifest_path)).at("fit_spec"));
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  if (records.empty()) {
    log << "error: nothing to plot in " << run_dir.string() << " (no fitted runs)\n";
    return kExitPartial;
  }
  const fs::path plot_dir = opt.out_dir.empty() ? run_dir / "plots" : opt.out_dir;

  std::vector<Json> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Json& a, const Json& b) { return a["m"].get<double>() < b["m"].get<double>(); });
  std::string rel = "label,m,r_rel\n", abs = "label,m,r_abs\n";
  std::string lrel = "label,log_m,log_r_rel\n", labs = "label,log_m,log_r_abs\n";
  std::vector<std::pair<double, double>> prel, pabs, plrel, plabs;
  std::size_t skipped = 0;
  for (const auto& r : sorted) {
    const auto label = r.at("label").get<std::string>();
    const double m = r.at("m").get<double>(), rr = r.at("r_rel").get<double>(), ra = r.at("r_abs").get<double>();
    rel += label + ',' + io::format_double(m) + ',' + io::format_double(rr) + '\n';
    abs += label + ',' + io::format_double(m) + ',' + io::format_double(ra) + '\n';
    prel.emplace_back(m, rr);
    pabs.emplace_back(m, ra);
    if (m > 0.0 && rr > 0.0 && ra > 0.0) {
      lrel += label + ',' + io::format_double(std::log(m)) + ',' + io::format_double(std::log(rr)) + '\n';
      labs += label + ',' + io::format_double(std::log(m)) + ',' + io::format_double(std::log(ra)) + '\n';
      plrel.emplace_back(std::log(m), std::log(rr));
      plabs.emplace_back(std::log(m), std::log(ra));
    } else {
      ++skipped;
    }
  }
  if (skipped > 0) log << "warning: " << skipped << " row(s) with m <= 0 excluded from log-log tables\n";

  std::vector<std::pair<fs::path, std::string>> files = {
      {plot_dir / "m_vs_r_rel.csv", rel},
      {plot_dir / "m_vs_r_abs.csv", abs},
      {plot_dir / "loglog_m_vs_r_rel.csv", lrel},
      {plot_dir / "loglog_m_vs_r_abs.csv", labs},
  };

  int status = kExitOk;
  for (const auto& r : records) {
    const auto label = r.at("label").get<std::string>();
    try {
      const auto table = io::read_curve_csv(run_dir / r.at("curve_file").get<std::string>());
      ErfFit fit;
      fit.a = spec.amplitude();
      fit.b = spec.offset();
      const std::pair<const char*, const std::optional<std::vector<double>>*> cols[] = {{"train", &table.acc_train},
                                                                                         {"val", &table.acc_val}};
      for (const auto& [suffix, column] : cols) {
        if (!*column) continue;
        const bool is_train = std::string(suffix) == "train";
        fit.s = r.at(is_train ? "s_train" : "s_gen").get<double>();
        fit.t_star = r.at(is_train ? "t_star_train" : "t_star_gen").get<double>();
        const AccuracyCurve curve(table.epochs, **column, is_train ? CurveKind::train : CurveKind::validation);
        const auto w = transition_window(curve, spec);
        std::vector<double> e(curve.epochs().begin() + w.first, curve.epochs().begin() + w.last);
        std::vector<double> o(curve.values().begin() + w.first, curve.values().begin() + w.last);
        std::vector<double> f(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) f[i] = erf_model(fit, e[i]);
        files.emplace_back(plot_dir / ("overlay_" + label + "_" + suffix + ".csv"), io::overlay_csv(e, o, f));
      }
    } catch (const std::exception& e) {
      log << "warning: no overlay for " << label << ": " << e.what() << '\n';
      status = kExitPartial;
    }
  }
  if (!opt.no_svg) {
    files.emplace_back(plot_dir / "m_vs_r_rel.svg", svg::line_chart("Relative sharpness", "m", "R_rel", prel));
    files.emplace_back(plot_dir / "m_vs_r_abs.svg", svg::line_chart("Absolute sharpness", "m", "R_abs", pabs));
    files.emplace_back(plot_dir / "loglog_m_vs_r_rel.svg",
                       svg::line_chart("Relative sharpness (log-log)", "ln m", "ln R_rel", plrel));
    files.emplace_back(plot_dir / "loglog_m_vs_r_abs.svg",
                       svg::line_chart("Absolute sharpness (log-log)", "ln m", "ln R_abs", plabs));
  }
  try {
    std::vector<fs::path> targets;
    for (const auto& f : files) targets.push_back(f.first);
    detail::check_free(targets, opt.overwrite);
    for (const auto& [path, content] : files) io::atomic_write(path, content, true);
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  log << "plotdata: wrote " << files.size() << " files to " << plot_dir.string() << '\n';
  return status;
}

// ---------------------------------------------------------------------------
// selfcheck

namespace detail {

inline void check_header(const std::string& text, const std::vector<std::string>& expected, const std::string& what) {
  const auto nl = text.find('\n');
  const auto header = io::split(text.substr(0, nl), ',');
  if (header != expected) throw ParseError(what + ": unexpected header", 1);
}

inline void check_metrics_jsonl(const fs::path& p) {
  std::size_t line = 0;
  for (const auto& r : read_jsonl(p)) {
    ++line;
    for (const auto& k : metrics_keys()) {
      if (!r.contains(k) || !r.at(k).is_number()) throw ParseError("metrics record lacks numeric '" + k + "'", line);
    }
    if (!(r.at("r_rel").get<double>() > 0.0) || !(r.at("r_abs").get<double>() > 0.0))
      throw ParseError("metrics record has non-positive sharpness", line);
  }
}

}  // namespace detail

/// Validates every file the harness emits under `dir` (recursively).
inline int cmd_selfcheck(const fs::path& dir, std::ostream& log) {
  if (!fs::is_directory(dir)) {
    log << "error: " << dir.string() << " is not a directory\n";
    return kExitUsage;
  }
  std::size_t checked = 0, bad = 0;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    const auto name = p.filename().string();
    const auto ext = p.extension().string();
    try {
      if (ext == ".tmp") throw Error("leftover temporary file");
      if (name == "metrics.jsonl") {
        detail::check_metrics_jsonl(p);
      } else if (ext == ".csv") {
        const std::string text = io::read_file(p);
        if (name.rfind("linear_", 0) == 0 || name.rfind("mlp_", 0) == 0) {
          const auto t = io::parse_curve_csv(text);
          for (const auto* col : {&t.acc_train, &t.acc_val})
            if (*col)
              for (double v : **col)
                if (v < 0.0 || v > 1.0) throw Error("accuracy outside [0, 1]");
          for (std::size_t i = 1; i < t.epochs.size(); ++i)
            if (!(t.epochs[i] > t.epochs[i - 1])) throw Error("epochs not strictly increasing");
        } else if (name.rfind("overlay_", 0) == 0) {
          detail::check_header(text, {"epoch", "observed", "fitted"}, name);
          io::detail::parse_numeric_csv(text);
        } else if (name.rfind("oracle_", 0) == 0) {
          detail::check_header(text, {"t", "eta0_t", "ltr_approx", "ltr_exact_mean", "ratio"}, name);
          io::detail::parse_numeric_csv(text);
        } else if (name == "trends.csv") {
          detail::check_header(text, {"pair", "slope", "intercept", "r_squared", "n_points"}, name);
        } else {
          continue;
        }
      } else if (ext == ".json") {
        const Json j = Json::parse(io::read_file(p));
        if (name.rfind("mlp_", 0) == 0) {
          parity_config_from_json(j.at("config"));
          if (!fs::exists(p.parent_path() / j.at("curve_file").get<std::string>()))
            throw Error("referenced curve file is missing");
        } else if (name == "run_manifest.json") {
          spec_from_json(j.at("fit_spec"));
        }
      } else {
        continue;
      }
      ++checked;
    } catch (const std::exception& e) {
      ++bad;
      log << "FAIL " << p.string() << ": " << e.what() << '\n';
    }
  }
  log << "selfcheck: " << checked << " files valid, " << bad << " invalid\n";
  return bad == 0 ? kExitOk : kExitPartial;
}

}  // namespace grokfit::harness
