// cdvi: simulate / train / eval / gap / study command-line pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "cdvi/dataset.hpp"
#include "cdvi/inference.hpp"
#include "cdvi/math.hpp"
#include "cdvi/metrics.hpp"
#include "cdvi/model.hpp"
#include "cdvi/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tracks files written by one command so a partial failure cleans up after
// itself and a manifest can be emitted at the end.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) { return dir_ / name; }

  void write_text(const std::string& name, const std::string& body) {
    const auto p = path(name);
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << body;
    written_.push_back(name);
  }

  void note(const std::string& name) { written_.push_back(name); }

  void finish() {
    json m;
    m["outputs"] = written_;
    std::ofstream out(dir_ / "manifest.json");
    out << m.dump(2) << "\n";
  }

  void clean() {
    for (const auto& name : written_) {
      std::error_code ec;
      fs::remove(dir_ / name, ec);
    }
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> written_;
};

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) {
      throw std::runtime_error("unknown key '" + it.key() + "' in " + what);
    }
  }
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  json j;
  in >> j;
  return j;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  return out;
}

std::string history_csv(const cdvi::TrainResult& r, const std::string& objective) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch," << objective << ",val_metric\n";
  for (const auto& e : r.history) {
    out << e.epoch << "," << e.train_objective << "," << e.val_metric << "\n";
  }
  return out.str();
}

cdvi::Family family_from_name(const std::string& name) {
  if (name == "gaussian") return cdvi::Family::kGaussian;
  if (name == "gumbel-min" || name == "gumbel_min") return cdvi::Family::kGumbelMin;
  throw std::runtime_error("unknown family '" + name +
                           "' (valid: gaussian, gumbel-min)");
}

// Applies a stored transform record to a raw dataset (covariates and time).
cdvi::SurvivalDataset apply_transform(const cdvi::SurvivalDataset& raw,
                                      const cdvi::TransformRecord& tr) {
  cdvi::SurvivalDataset out = raw;
  if (!tr.standardized) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (int j = 0; j < raw.d_x; ++j) {
      const std::size_t k = i * static_cast<std::size_t>(raw.d_x) +
                            static_cast<std::size_t>(j);
      out.x[k] = (raw.x[k] - tr.feature_mean[static_cast<std::size_t>(j)]) /
                 tr.feature_std[static_cast<std::size_t>(j)];
    }
    out.y[i] = tr.to_model_time(raw.y[i]);
  }
  out.transform = tr;
  return out;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const json& cfg) {
  cdvi::SimConfig sim;
  std::string preset = cfg.value("preset", "");
  if (!preset.empty()) {
    sim = cdvi::sim_preset(preset, cfg.value("n", 10000),
                           cfg.value("seed", std::uint64_t{0}));
  } else {
    if (!cfg.contains("mu_c")) {
      throw std::runtime_error("simulate needs --preset or --mu-c");
    }
    sim.mu_c = cfg.at("mu_c").get<double>();
    sim.n = cfg.value("n", 10000);
    sim.seed = cfg.value("seed", std::uint64_t{0});
  }
  if (cfg.contains("sigma_c")) sim.sigma_c = cfg.at("sigma_c").get<double>();
  if (cfg.contains("sigma_u")) sim.sigma_u = cfg.at("sigma_u").get<double>();
  if (cfg.contains("burn_in")) sim.burn_in = cfg.at("burn_in").get<int>();

  auto ds = cdvi::gibbs_simulate(sim);
  const bool exp_time = cfg.value("exp_time", false);
  if (exp_time) {
    for (auto& y : ds.y) y = std::exp(y);
  }

  OutputSet out(cfg.at("out").get<std::string>());
  try {
    cdvi::save_csv(ds, out.path("data.csv"));
    out.note("data.csv");
    cdvi::save_truth_csv(ds, out.path("latents.csv"));
    out.note("latents.csv");
    json resolved = json::parse(sim.to_json());
    resolved["preset"] = preset;
    resolved["exp_time"] = exp_time;
    out.write_text("config.json", resolved.dump(2) + "\n");
    out.write_text("summary.json", cdvi::summary_json(ds) + "\n");
  } catch (...) {
    out.clean();
    throw;
  }
  out.finish();

  std::vector<double> ev, ce;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (ds.event[i] == 1 ? ev : ce).push_back(ds.y[i]);
  }
  std::printf("n=%zu censor_rate=%.2f%%\n", ds.size(), 100.0 * ds.censor_rate());
  if (!ce.empty()) {
    std::printf("censored time mean: %.2f\n",
                std::accumulate(ce.begin(), ce.end(), 0.0) /
                    static_cast<double>(ce.size()));
  }
  if (!ev.empty()) {
    std::printf("event time median: %.2f  min: %.2f  max: %.2f\n",
                cdvi::quantile(ev, 0.5), cdvi::quantile(ev, 0.0),
                cdvi::quantile(ev, 1.0));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainSetup {
  cdvi::SurvivalDataset data;
  cdvi::SplitIndices split;
  cdvi::EstimatorConfig est;
  cdvi::TrainConfig tc;
  cdvi::Family family = cdvi::Family::kGaussian;
  int d_z = 2;
  std::vector<int> hidden{32, 32};
  cdvi::ad::Activation activation = cdvi::ad::Activation::kTanh;
  double dropout = 0.0;
  std::uint64_t model_seed = 0;
};

TrainSetup prepare_training(const json& cfg) {
  TrainSetup s;
  const auto raw = cdvi::load_csv(cfg.at("data").get<std::string>(),
                                  cfg.value("time_col", std::string("time")),
                                  cfg.value("event_col", std::string("event")));
  s.tc.seed = cfg.value("seed", std::uint64_t{0});
  s.model_seed = s.tc.seed ^ 0xABCDEF12ull;
  s.split = cdvi::split(raw, s.tc.seed);
  s.data = cdvi::standardize(raw, s.split.train, cfg.value("log_time", false));

  s.est.objective = cdvi::objective_from_name(cfg.value("objective", "elbo-c"));
  if (s.est.objective == cdvi::Objective::kIs ||
      s.est.objective == cdvi::Objective::kDvi) {
    s.est.m = cfg.value("m", 10);
    s.est.k = cfg.value("k", 10);
  }
  s.est.temperature = cfg.value("temperature", 1.0);
  s.est.validate();

  s.tc.learning_rate = cfg.value("lr", 0.001);
  s.tc.batch_size = cfg.value("batch", 100);
  s.tc.max_epochs = cfg.value("epochs", 200);
  s.tc.patience = cfg.value("patience", 10);
  const std::string vm = cfg.value("val_metric", "elbo");
  if (vm == "elbo") {
    s.tc.validation_metric = cdvi::ValidationMetric::kElbo;
  } else if (vm == "c-index" || vm == "c_index") {
    s.tc.validation_metric = cdvi::ValidationMetric::kCIndex;
  } else {
    throw std::runtime_error("unknown val_metric '" + vm + "'");
  }

  s.family = family_from_name(cfg.value("family", "gaussian"));
  s.d_z = cfg.value("d_z", 2 * s.data.d_x);
  if (cfg.contains("hidden")) {
    s.hidden = parse_int_list(cfg.at("hidden").get<std::string>());
  }
  const std::string act = cfg.value("activation", "tanh");
  s.activation = act == "relu" ? cdvi::ad::Activation::kRelu
                               : cdvi::ad::Activation::kTanh;
  s.dropout = cfg.value("dropout", 0.0);
  return s;
}

int run_one_training(const json& cfg, const fs::path& out_dir) {
  auto s = prepare_training(cfg);
  auto model = cdvi::CdCvaeModel::make(s.data.d_x, s.d_z, s.hidden, s.family,
                                       s.model_seed, s.activation, s.dropout);
  const auto result = cdvi::train(model, s.data, s.split, s.est, s.tc);

  OutputSet out(out_dir);
  try {
    json extra;
    extra["objective"] = std::string(cdvi::objective_name(s.est.objective));
    extra["m"] = s.est.m;
    extra["k"] = s.est.k;
    extra["temperature"] = s.est.temperature;
    extra["best_epoch"] = result.best_epoch;
    extra["best_val"] = result.best_val;
    cdvi::save_model(model, s.data.transform, s.split.seed, extra.dump(),
                     out.path("checkpoint.json"));
    out.note("checkpoint.json");
    out.write_text("history.csv",
                   history_csv(result, std::string(cdvi::objective_name(s.est.objective))));
    json resolved = cfg;
    resolved["resolved_defaults"] = {{"lr", s.tc.learning_rate},
                                     {"batch", s.tc.batch_size},
                                     {"epochs", s.tc.max_epochs},
                                     {"patience", s.tc.patience},
                                     {"d_z", s.d_z}};
    out.write_text("config.json", resolved.dump(2) + "\n");
  } catch (...) {
    out.clean();
    throw;
  }
  out.finish();
  std::printf("best epoch %d, validation metric %.6f\n", result.best_epoch,
              result.best_val);
  return 0;
}

int cmd_train(const json& cfg) {
  const fs::path base = cfg.at("out").get<std::string>();
  const int repeats = cfg.value("repeats", 1);
  if (repeats <= 1) return run_one_training(cfg, base);

  // Independent seeded runs, fanned out over threads.
  std::vector<std::thread> pool;
  std::vector<int> status(static_cast<std::size_t>(repeats), 1);
  for (int r = 0; r < repeats; ++r) {
    pool.emplace_back([&, r] {
      json sub = cfg;
      sub["seed"] = cfg.value("seed", std::uint64_t{0}) + static_cast<std::uint64_t>(r);
      sub.erase("repeats");
      try {
        status[static_cast<std::size_t>(r)] =
            run_one_training(sub, base / ("run" + std::to_string(r)));
      } catch (const std::exception& e) {
        std::fprintf(stderr, "run %d failed: %s\n", r, e.what());
        status[static_cast<std::size_t>(r)] = 1;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (int st : status) {
    if (st != 0) return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const json& cfg) {
  cdvi::TransformRecord transform;
  std::uint64_t split_seed = 0;
  std::string extra;
  const auto model = cdvi::load_model(cfg.at("checkpoint").get<std::string>(),
                                      &transform, &split_seed, &extra);
  const auto raw = cdvi::load_csv(cfg.at("data").get<std::string>(),
                                  cfg.value("time_col", std::string("time")),
                                  cfg.value("event_col", std::string("event")));
  if (raw.d_x != model.d_x) {
    throw std::runtime_error("checkpoint expects d_x=" + std::to_string(model.d_x) +
                             " but data has d_x=" + std::to_string(raw.d_x));
  }
  const auto sp = cdvi::split(raw, split_seed);

  std::vector<double> times;
  std::vector<int> events;
  std::vector<double> event_times;
  for (auto i : sp.test) {
    times.push_back(raw.y[i]);
    events.push_back(raw.event[i]);
    if (raw.event[i] == 1) event_times.push_back(raw.y[i]);
  }
  if (event_times.size() < 10) {
    throw std::runtime_error("test split has fewer than 10 events");
  }

  std::vector<std::string> metrics;
  {
    std::string cur;
    for (char ch : cfg.value("metrics", std::string("c")) + ",") {
      if (ch == ',') {
        if (!cur.empty()) metrics.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
  }
  for (const auto& m : metrics) {
    if (m != "c" && m != "ctd" && m != "brier") {
      throw std::runtime_error("unknown metric '" + m + "' (valid: c, ctd, brier)");
    }
  }

  std::vector<double> qs;
  for (int q = 1; q <= 10; ++q) qs.push_back(cdvi::quantile(event_times, 0.1 * q));
  const double t75 = cdvi::quantile(event_times, 0.75);

  const int n_prior = cfg.value("prior_samples", 200);
  std::vector<double> risk(times.size() * 10);
  std::vector<double> risk75(times.size());

  const std::string risk_csv = cfg.value("risk_csv", std::string());
  if (!risk_csv.empty()) {
    // Injected predictions: 10 quantile columns, optional 11th for the
    // 75th-percentile horizon (defaults to the q80 column).
    std::ifstream in(risk_csv);
    if (!in) throw std::runtime_error("cannot read " + risk_csv);
    std::string line;
    std::getline(in, line);
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!std::getline(in, line)) {
        throw std::runtime_error("risk csv has fewer rows than the test split");
      }
      std::istringstream row(line);
      std::string cell;
      std::vector<double> vals;
      while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
      if (vals.size() < 10) throw std::runtime_error("risk csv needs 10 columns");
      for (std::size_t q = 0; q < 10; ++q) risk[i * 10 + q] = vals[q];
      risk75[i] = vals.size() > 10 ? vals[10] : vals[7];
    }
  } else {
    std::vector<double> all_ts;
    for (double t : qs) all_ts.push_back(transform.to_model_time(t));
    all_ts.push_back(transform.to_model_time(t75));
    for (std::size_t i = 0; i < sp.test.size(); ++i) {
      std::vector<double> x(raw.row(sp.test[i]).begin(), raw.row(sp.test[i]).end());
      if (transform.standardized) {
        for (int j = 0; j < raw.d_x; ++j) {
          x[static_cast<std::size_t>(j)] =
              (x[static_cast<std::size_t>(j)] -
               transform.feature_mean[static_cast<std::size_t>(j)]) /
              transform.feature_std[static_cast<std::size_t>(j)];
        }
      }
      const auto s = cdvi::predict_survival(model, x, all_ts, n_prior, 1234);
      for (std::size_t q = 0; q < 10; ++q) risk[i * 10 + q] = s[q];
      risk75[i] = s[10];
    }
  }

  json report = json::object();
  for (const auto& m : metrics) {
    if (m == "c") {
      report["c_index_quantile_avg"] = cdvi::c_index_quantile_avg(risk, times, events);
    } else if (m == "ctd") {
      const auto r = cdvi::c_td_ipcw(risk75, times, events, t75);
      report["c_td_ipcw"] = {{"value", r.value},
                             {"tau", t75},
                             {"n_pairs", r.n_pairs},
                             {"n_dropped", r.n_dropped}};
    } else {
      report["brier_ipcw"] = {{"value", cdvi::brier_ipcw(risk75, times, events, t75)},
                              {"time", t75}};
    }
  }
  report["n_test"] = times.size();

  OutputSet out(cfg.at("out").get<std::string>());
  try {
    out.write_text("metrics.json", report.dump(2) + "\n");
    out.write_text("config.json", cfg.dump(2) + "\n");
  } catch (...) {
    out.clean();
    throw;
  }
  out.finish();
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// gap

cdvi::SurvivalDataset load_with_truth(const json& cfg) {
  auto ds = cdvi::load_csv(cfg.at("data").get<std::string>(),
                           cfg.value("time_col", std::string("time")),
                           cfg.value("event_col", std::string("event")));
  const std::string truth = cfg.value("truth", std::string());
  if (!truth.empty()) {
    std::ifstream in(truth);
    if (!in) throw std::runtime_error("cannot read " + truth);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string cell;
      std::vector<double> vals;
      while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
      if (vals.size() != 4) throw std::runtime_error("latents csv needs 4 columns");
      ds.truth.z1.push_back(vals[0]);
      ds.truth.z2.push_back(vals[1]);
      ds.truth.u.push_back(vals[2]);
      ds.truth.c.push_back(vals[3]);
    }
    if (ds.truth.z1.size() != ds.size()) {
      throw std::runtime_error("latents csv row count mismatch");
    }
  }
  return ds;
}

int cmd_gap(const json& cfg) {
  const auto ds = load_with_truth(cfg);
  const int M = cfg.value("M", 10000);
  const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
  const long reps = cfg.value("elbo_replications", 1000L);
  const std::string override_mode = cfg.value("encoder_override", std::string());

  cdvi::EstimatorConfig est;
  est.objective = cdvi::objective_from_name(cfg.value("objective", "elbo-c"));
  if (est.objective == cdvi::Objective::kIs ||
      est.objective == cdvi::Objective::kDvi) {
    est.m = cfg.value("m", 10);
    est.k = cfg.value("k", 10);
  }

  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  if (cfg.contains("rows")) {
    rows.resize(std::min<std::size_t>(rows.size(), cfg.at("rows").get<std::size_t>()));
  }

  cdvi::GapReport rep;
  if (override_mode == "true-posterior") {
    if (ds.d_x != 1) {
      throw std::runtime_error("true-posterior override needs simulated data");
    }
    const cdvi::SimOracleRowModel oracle;
    rep = cdvi::gap_report(oracle, ds, rows, est, M, seed, reps);
  } else if (override_mode.empty()) {
    cdvi::TransformRecord transform;
    std::uint64_t split_seed = 0;
    auto model = cdvi::load_model(cfg.at("checkpoint").get<std::string>(),
                                  &transform, &split_seed, nullptr);
    const auto std_ds = apply_transform(ds, transform);
    const cdvi::CdCvaeRowModel rm(model);
    rep = cdvi::gap_report(rm, std_ds, rows, est, M, seed, reps);
  } else {
    throw std::runtime_error("unknown encoder_override '" + override_mode + "'");
  }

  OutputSet out(cfg.at("out").get<std::string>());
  try {
    out.write_text("gap.json", rep.to_json() + "\n");
    out.write_text("config.json", cfg.dump(2) + "\n");
  } catch (...) {
    out.clean();
    throw;
  }
  out.finish();
  std::printf("%s\n", rep.to_json().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// study

int cmd_study(const json& cfg) {
  const std::string study = cfg.at("study").get<std::string>();
  OutputSet out(cfg.at("out").get<std::string>());
  try {
    if (study == "bias-scaling") {
      std::vector<int> grid;
      if (cfg.contains("m_grid")) {
        grid = parse_int_list(cfg.at("m_grid").get<std::string>());
      } else {
        for (int m = 4; m <= 1024; m *= 2) grid.push_back(m);
      }
      const auto s = cdvi::bias_variance_study(
          grid, cfg.value("replications", 20000L), cfg.value("seed", std::uint64_t{7}));
      out.write_text("bias_scaling_points.csv", s.to_csv());
      std::ostringstream slopes;
      slopes.precision(12);
      slopes << "is_bias_slope,is_var_slope,dvi_bias_slope,true_value\n"
             << s.is_bias_slope << "," << s.is_var_slope << ","
             << s.dvi_bias_slope << "," << s.true_value << "\n";
      out.write_text("bias_scaling_slopes.csv", slopes.str());
      out.write_text("bias_scaling.json", s.to_json() + "\n");
      std::printf("slopes: bias %.3f, var %.3f\n", s.is_bias_slope, s.is_var_slope);
    } else if (study == "monotonicity") {
      const auto ds_raw = load_with_truth(cfg);
      cdvi::TransformRecord transform;
      std::uint64_t split_seed = 0;
      auto model = cdvi::load_model(cfg.at("checkpoint").get<std::string>(),
                                    &transform, &split_seed, nullptr);
      const auto ds = apply_transform(ds_raw, transform);
      std::vector<int> mg = parse_int_list(cfg.value("m_grid", std::string("1,2,4,8,16,32")));
      std::vector<int> kg = parse_int_list(cfg.value("k_grid", std::string("1,2,4,8,16,32")));
      std::vector<std::size_t> rows(std::min<std::size_t>(
          ds.size(), cfg.value("rows", std::size_t{16})));
      std::iota(rows.begin(), rows.end(), 0);
      const cdvi::CdCvaeRowModel rm(model);
      const auto s = cdvi::monotonicity_study(rm, ds, rows, mg, kg,
                                              cfg.value("replications", 100000L),
                                              cfg.value("seed", std::uint64_t{5}));
      out.write_text("monotonicity.csv", s.to_csv());
      std::ostringstream diffs;
      diffs.precision(12);
      diffs << "axis,from,to,diff,se\n";
      for (const auto& d : s.m_diffs) {
        diffs << "m," << d.from << "," << d.to << "," << d.diff << "," << d.se << "\n";
      }
      for (const auto& d : s.k_diffs) {
        diffs << "k," << d.from << "," << d.to << "," << d.diff << "," << d.se << "\n";
      }
      out.write_text("monotonicity_diffs.csv", diffs.str());
      std::printf("nondecreasing: m=%s k=%s\n", s.nondecreasing_m ? "yes" : "no",
                  s.nondecreasing_k ? "yes" : "no");
    } else if (study == "posterior-slice") {
      const auto ds = load_with_truth(cfg);
      if (!ds.has_truth()) {
        throw std::runtime_error("posterior-slice needs the latents sidecar");
      }
      cdvi::TransformRecord transform;
      std::uint64_t split_seed = 0;
      auto model = cdvi::load_model(cfg.at("checkpoint").get<std::string>(),
                                    &transform, &split_seed, nullptr);
      std::vector<double> axis;
      const double lo = cfg.value("z_min", -6.0);
      const double hi = cfg.value("z_max", 6.0);
      const double step = cfg.value("z_step", 0.1);
      for (double v = lo; v <= hi + 1e-12; v += step) axis.push_back(v);
      const auto std_ds = apply_transform(ds, transform);
      out.write_text("posterior_slice.csv",
                     cdvi::posterior_slice_csv(model, std_ds, cfg.value("x", 1.0),
                                               cfg.value("y", 0.0), axis));
    } else {
      throw std::runtime_error(
          "unknown study '" + study +
          "' (valid: monotonicity, bias-scaling, posterior-slice)");
    }
    out.write_text("config.json", cfg.dump(2) + "\n");
  } catch (...) {
    out.clean();
    throw;
  }
  out.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"censor-dependent variational inference pipeline"};
  app.require_subcommand(1);

  // Every subcommand takes --config (JSON defaults) plus flag overrides;
  // flags win. The resolved config is echoed to the output directory.
  json flags = json::object();
  auto set_str = [&flags](const std::string& key) {
    return [&flags, key](const std::string& v) { flags[key] = v; };
  };
  auto set_int = [&flags](const std::string& key) {
    return [&flags, key](std::int64_t v) { flags[key] = v; };
  };
  auto set_f64 = [&flags](const std::string& key) {
    return [&flags, key](double v) { flags[key] = v; };
  };

  std::string config_path;

  auto* sim = app.add_subcommand("simulate", "generate a Gibbs-sampled dataset");
  sim->add_option("--config", config_path);
  sim->add_option_function<std::string>("--preset", set_str("preset"), "sd1..sd6");
  sim->add_option_function<double>("--mu-c", set_f64("mu_c"));
  sim->add_option_function<double>("--sigma-c", set_f64("sigma_c"));
  sim->add_option_function<double>("--sigma-u", set_f64("sigma_u"));
  sim->add_option_function<std::int64_t>("--n", set_int("n"));
  sim->add_option_function<std::int64_t>("--burn-in", set_int("burn_in"));
  sim->add_option_function<std::int64_t>("--seed", set_int("seed"));
  sim->add_flag_callback("--exp-time", [&flags] { flags["exp_time"] = true; });
  sim->add_option_function<std::string>("--out", set_str("out"))->required();

  auto* tr = app.add_subcommand("train", "fit a CD-CVAE");
  tr->add_option("--config", config_path);
  tr->add_option_function<std::string>("--data", set_str("data"));
  tr->add_option_function<std::string>("--objective", set_str("objective"),
                                       "vanilla|elbo-c|is|dvi");
  tr->add_option_function<std::int64_t>("--m", set_int("m"));
  tr->add_option_function<std::int64_t>("--k", set_int("k"));
  tr->add_option_function<std::string>("--family", set_str("family"));
  tr->add_option_function<std::int64_t>("--seed", set_int("seed"));
  tr->add_option_function<double>("--lr", set_f64("lr"));
  tr->add_option_function<std::int64_t>("--batch", set_int("batch"));
  tr->add_option_function<std::int64_t>("--epochs", set_int("epochs"));
  tr->add_option_function<std::int64_t>("--patience", set_int("patience"));
  tr->add_option_function<double>("--temperature", set_f64("temperature"));
  tr->add_option_function<std::string>("--hidden", set_str("hidden"));
  tr->add_option_function<std::int64_t>("--d-z", set_int("d_z"));
  tr->add_option_function<std::string>("--activation", set_str("activation"));
  tr->add_option_function<double>("--dropout", set_f64("dropout"));
  tr->add_option_function<std::string>("--val-metric", set_str("val_metric"));
  tr->add_option_function<std::string>("--time-col", set_str("time_col"));
  tr->add_option_function<std::string>("--event-col", set_str("event_col"));
  tr->add_flag_callback("--log-time", [&flags] { flags["log_time"] = true; });
  tr->add_option_function<std::int64_t>("--repeats", set_int("repeats"));
  tr->add_option_function<std::string>("--out", set_str("out"))->required();

  auto* ev = app.add_subcommand("eval", "metrics on the stored test split");
  ev->add_option("--config", config_path);
  ev->add_option_function<std::string>("--checkpoint", set_str("checkpoint"));
  ev->add_option_function<std::string>("--data", set_str("data"));
  ev->add_option_function<std::string>("--metrics", set_str("metrics"),
                                       "comma list of c,ctd,brier");
  ev->add_option_function<std::string>("--risk-csv", set_str("risk_csv"));
  ev->add_option_function<std::int64_t>("--prior-samples", set_int("prior_samples"));
  ev->add_option_function<std::string>("--time-col", set_str("time_col"));
  ev->add_option_function<std::string>("--event-col", set_str("event_col"));
  ev->add_option_function<std::string>("--out", set_str("out"))->required();

  auto* gp = app.add_subcommand("gap", "inference-gap report");
  gp->add_option("--config", config_path);
  gp->add_option_function<std::string>("--checkpoint", set_str("checkpoint"));
  gp->add_option_function<std::string>("--data", set_str("data"));
  gp->add_option_function<std::string>("--truth", set_str("truth"));
  gp->add_option_function<std::int64_t>("--M", set_int("M"));
  gp->add_option_function<std::int64_t>("--rows", set_int("rows"));
  gp->add_option_function<std::int64_t>("--elbo-replications",
                                        set_int("elbo_replications"));
  gp->add_option_function<std::string>("--objective", set_str("objective"));
  gp->add_option_function<std::int64_t>("--m", set_int("m"));
  gp->add_option_function<std::int64_t>("--k", set_int("k"));
  gp->add_option_function<std::int64_t>("--seed", set_int("seed"));
  gp->add_option_function<std::string>("--encoder-override",
                                       set_str("encoder_override"));
  gp->add_option_function<std::string>("--out", set_str("out"))->required();

  auto* st = app.add_subcommand("study", "theorem study harnesses");
  st->add_option("--config", config_path);
  st->add_option_function<std::string>(
      "--study", set_str("study"), "monotonicity|bias-scaling|posterior-slice");
  st->add_option_function<std::string>("--checkpoint", set_str("checkpoint"));
  st->add_option_function<std::string>("--data", set_str("data"));
  st->add_option_function<std::string>("--truth", set_str("truth"));
  st->add_option_function<std::string>("--m-grid", set_str("m_grid"));
  st->add_option_function<std::string>("--k-grid", set_str("k_grid"));
  st->add_option_function<std::int64_t>("--rows", set_int("rows"));
  st->add_option_function<std::int64_t>("--replications", set_int("replications"));
  st->add_option_function<std::int64_t>("--seed", set_int("seed"));
  st->add_option_function<double>("--x", set_f64("x"));
  st->add_option_function<double>("--y", set_f64("y"));
  st->add_option_function<double>("--z-min", set_f64("z_min"));
  st->add_option_function<double>("--z-max", set_f64("z_max"));
  st->add_option_function<double>("--z-step", set_f64("z_step"));
  st->add_option_function<std::string>("--out", set_str("out"))->required();

  CLI11_PARSE(app, argc, argv);

  static const std::map<std::string, std::set<std::string>> kAllowedKeys = {
      {"simulate",
       {"preset", "mu_c", "sigma_c", "sigma_u", "n", "burn_in", "seed",
        "exp_time", "out"}},
      {"train",
       {"data", "objective", "m", "k", "family", "seed", "lr", "batch",
        "epochs", "patience", "temperature", "hidden", "d_z", "activation",
        "dropout", "val_metric", "time_col", "event_col", "log_time", "repeats",
        "out", "resolved_defaults"}},
      {"eval",
       {"checkpoint", "data", "metrics", "risk_csv", "prior_samples",
        "time_col", "event_col", "out"}},
      {"gap",
       {"checkpoint", "data", "truth", "M", "rows", "elbo_replications",
        "objective", "m", "k", "seed", "encoder_override", "time_col",
        "event_col", "out"}},
      {"study",
       {"study", "checkpoint", "data", "truth", "m_grid", "k_grid", "rows",
        "replications", "seed", "x", "y", "z_min", "z_max", "z_step",
        "time_col", "event_col", "out"}},
  };

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    json cfg = load_config_file(config_path);
    reject_unknown_keys(cfg, kAllowedKeys.at(cmd), "config for " + cmd);
    for (auto it = flags.begin(); it != flags.end(); ++it) {
      cfg[it.key()] = it.value();
    }
    if (!cfg.contains("out")) throw std::runtime_error("--out is required");

    if (cmd == "simulate") return cmd_simulate(cfg);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "eval") return cmd_eval(cfg);
    if (cmd == "gap") return cmd_gap(cfg);
    if (cmd == "study") return cmd_study(cfg);
    throw std::runtime_error("unhandled command " + cmd);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
