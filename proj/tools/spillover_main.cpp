// Command-line surface: simulate panels, estimate from files, run replicated
// experiments. Exit codes: 0 success, 2 configuration error, 3 numeric
// failure, 4 I/O error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spillover/errors.hpp"
#include "spillover/io.hpp"
#include "spillover/montecarlo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spillover;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw InvalidArgumentError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw InvalidArgumentError("config must be a JSON object");
  return j;
}

template <typename T>
T setting(const CLI::App* cmd, const std::string& flag, const json& cfg, const std::string& key,
          T flag_value, T fallback) {
  if (cmd->count(flag) > 0) return flag_value;
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

int thread_budget(int requested) {
  const char* env = std::getenv("SPILLOVER_THREADS");
  if (env != nullptr) {
    const int cap = std::atoi(env);
    if (cap > 0) requested = requested > 0 ? std::min(requested, cap) : cap;
  }
  return requested;
}

void require_out_dir(const std::string& out, bool create) {
  if (out.empty()) throw InvalidArgumentError("--out is required");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw IoError("'" + out + "' exists and is not a directory");
    return;
  }
  if (!create) throw IoError("output directory '" + out + "' does not exist (pass --create)");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create '" + out + "': " + ec.message());
}

std::string config_hash(const json& j) {
  std::ostringstream os;
  os << std::hex << std::hash<std::string>{}(j.dump());
  return os.str();
}

SimulationDesign design_from(const std::string& name, int n, int T) {
  if (name != "table1") {
    throw InvalidArgumentError("unknown design '" + name + "' (available: table1)");
  }
  return table1_design(n, T);
}

PipelineConfig pipeline_from(const json& cfg) {
  PipelineConfig pc;
  pc.zeta = cfg.value("zeta", pc.zeta);
  pc.grid_points = cfg.value("grid_points", pc.grid_points);
  pc.grid_lo_frac = cfg.value("grid_lo_frac", pc.grid_lo_frac);
  pc.tau = cfg.value("tau", pc.tau);
  pc.factor_variant = cfg.value("factor_variant", pc.factor_variant);
  if (cfg.contains("optimizer")) {
    const json& o = cfg.at("optimizer");
    pc.opt.max_iterations = o.value("max_iterations", pc.opt.max_iterations);
    pc.opt.objective_tolerance = o.value("objective_tolerance", pc.opt.objective_tolerance);
    pc.opt.step_init = o.value("step_init", pc.opt.step_init);
    pc.opt.backtrack_factor = o.value("backtrack_factor", pc.opt.backtrack_factor);
    pc.opt.multistart_count = o.value("multistart_count", pc.opt.multistart_count);
    pc.opt.seed = o.value("seed", pc.opt.seed);
    pc.opt.trace_path = o.value("trace_path", pc.opt.trace_path);
  }
  pc.opt.validate();
  return pc;
}

struct SimulateArgs {
  std::string config, design = "table1", out;
  int n = 25, t = 25;
  std::uint64_t seed = 1;
  bool emit_truth = false, create = false;
};

int cmd_simulate(const CLI::App* cmd, SimulateArgs& a) {
  const json cfg = load_config(a.config);
  const std::string design_name = setting(cmd, "--design", cfg, "design", a.design,
                                          std::string("table1"));
  const int n = setting(cmd, "--n", cfg, "n", a.n, 25);
  const int T = setting(cmd, "--t", cfg, "t", a.t, 25);
  const std::uint64_t seed = setting(cmd, "--seed", cfg, "seed", a.seed, std::uint64_t{1});
  const std::string out = setting(cmd, "--out", cfg, "out", a.out, std::string());

  SimulationDesign design = design_from(design_name, n, T);  // validates before side effects
  design.seed = seed;
  require_out_dir(out, a.create || cfg.value("create", false));

  const SimulatedTruth truth = simulate(design);
  const fs::path dir(out);
  save_panel_csv(truth.panel, (dir / "panel.csv").string());

  json manifest;
  manifest["command"] = "simulate";
  manifest["design"] = design_name;
  manifest["n"] = n;
  manifest["t"] = T;
  manifest["seed"] = seed;
  manifest["rng"] = SplitMix64::name();
  manifest["config_hash"] = config_hash(cfg);
  json wm;
  wm["n"] = n;
  wm["matrices"] = json::array();
  for (int q = 0; q < design.weights.size(); ++q) {
    const std::string file = "w" + std::to_string(q + 1) + ".csv";
    save_weights_csv(design.weights.matrices[q], (dir / file).string());
    wm["matrices"].push_back({{"file", file},
                              {"label", design.weights.matrices[q].label},
                              {"row_normalized", true}});
  }
  write_text_file((dir / "weights_manifest.json").string(), wm.dump(2) + "\n");
  if (a.emit_truth || cfg.value("emit_truth", false)) {
    save_truth_json(truth, design, (dir / "truth.json").string());
  }
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << "simulated panel written to " << out << "\n";
  return 0;
}

struct EstimateArgs {
  std::string config, panel, weights, out;
  int r_max = 6, fix_r = -1;
  double gamma = -1, zeta = 4.0;
  std::uint64_t seed = 0;
  bool create = false;
};

int cmd_estimate(const CLI::App* cmd, EstimateArgs& a) {
  const json cfg = load_config(a.config);
  const std::string panel_path = setting(cmd, "--panel", cfg, "panel", a.panel, std::string());
  const std::string weights_path =
      setting(cmd, "--weights", cfg, "weights", a.weights, std::string());
  const std::string out = setting(cmd, "--out", cfg, "out", a.out, std::string());
  const int r_max = setting(cmd, "--r-max", cfg, "r_max", a.r_max, 6);
  const int fix_r = setting(cmd, "--fix-r", cfg, "fix_r", a.fix_r, -1);
  const double gamma = setting(cmd, "--gamma", cfg, "gamma", a.gamma, -1.0);

  if (panel_path.empty()) throw InvalidArgumentError("--panel is required");
  if (weights_path.empty()) throw InvalidArgumentError("--weights is required");
  if (!fs::exists(panel_path)) throw IoError("panel file '" + panel_path + "' does not exist");
  if (!fs::exists(weights_path)) {
    throw IoError("weights manifest '" + weights_path + "' does not exist");
  }

  PipelineConfig pc = pipeline_from(cfg);
  pc.R_max = r_max;
  pc.fix_R = fix_r;
  pc.zeta = setting(cmd, "--zeta", cfg, "zeta", a.zeta, pc.zeta);
  pc.opt.seed = setting(cmd, "--seed", cfg, "seed", a.seed, pc.opt.seed);
  if (gamma >= 0) {
    pc.gamma_rho_override = gamma;
    pc.gamma_beta_override = gamma;
  }

  const WeightsSet weights = load_weights_manifest(weights_path);
  PanelLayout layout;
  if (cfg.contains("layout")) {
    const json& l = cfg.at("layout");
    layout.own_lag = l.value("own_lag", true);
    layout.lag_channels = l.value("lag_channels", std::vector<int>{});
    layout.interact_channels = l.value("interact_channels", std::vector<int>{});
  } else {
    // Mirror the simulation design: interactions on every channel, own lag,
    // lagged spillovers on all but the last channel.
    layout.own_lag = true;
    for (int q = 0; q < weights.size(); ++q) layout.interact_channels.push_back(q);
    for (int q = 0; q + 1 < weights.size(); ++q) layout.lag_channels.push_back(q);
  }

  require_out_dir(out, a.create || cfg.value("create", false));
  const PanelData data = load_panel_csv(panel_path, weights, layout);
  const EstimationReport report = full_pipeline(data, weights, r_max, pc);

  const fs::path dir(out);
  save_report_json(report, (dir / "report.json").string());
  write_text_file((dir / "report.txt").string(), report_text(report));
  save_gamma_trace_csv(report, (dir / "ic_star_trace.csv").string());
  save_factor_trace_csv(report, (dir / "factor_ic_trace.csv").string());
  std::cout << report_text(report);
  return 0;
}

struct MontecarloArgs {
  std::string config, design = "table1", out;
  int n = 25, t = 25, reps = 100, r_max = 6, fix_r = -1, threads = 0;
  std::uint64_t seed = 1;
  bool pipeline = false, create = false;
};

int cmd_montecarlo(const CLI::App* cmd, MontecarloArgs& a) {
  const json cfg = load_config(a.config);
  const std::string design_name =
      setting(cmd, "--design", cfg, "design", a.design, std::string("table1"));
  const int n = setting(cmd, "--n", cfg, "n", a.n, 25);
  const int T = setting(cmd, "--t", cfg, "t", a.t, 25);
  const int reps = setting(cmd, "--reps", cfg, "reps", a.reps, 100);
  const int r_max = setting(cmd, "--r-max", cfg, "r_max", a.r_max, 6);
  const int fix_r = setting(cmd, "--fix-r", cfg, "fix_r", a.fix_r, -1);
  const bool pipeline = a.pipeline || cfg.value("pipeline", false);
  const std::uint64_t seed = setting(cmd, "--seed", cfg, "seed", a.seed, std::uint64_t{1});
  const std::string out = setting(cmd, "--out", cfg, "out", a.out, std::string());
  const int threads = thread_budget(setting(cmd, "--threads", cfg, "threads", a.threads, 0));

  ExperimentPlan plan;
  plan.design = design_from(design_name, n, T);
  plan.replications = reps;
  plan.pipeline_mode = pipeline;
  plan.R_used = fix_r;
  plan.R_max = r_max;
  plan.master_seed = seed;
  plan.estimation = pipeline_from(cfg);
  if (pipeline) plan.outputs.insert("factor_selection");
  plan.validate();  // before any side effects
  require_out_dir(out, a.create || cfg.value("create", false));

  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentSummary summary = run_experiment(plan, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir(out);
  write_text_file((dir / "summary.csv").string(), summary_csv(summary, plan));
  write_text_file((dir / "replications.csv").string(), replication_csv(summary));
  write_text_file((dir / "tables.txt").string(), summary_text(summary, plan));

  json manifest;
  manifest["command"] = "montecarlo";
  manifest["design"] = design_name;
  manifest["n"] = n;
  manifest["t"] = T;
  manifest["replications"] = reps;
  manifest["pipeline"] = pipeline;
  manifest["fix_r"] = fix_r;
  manifest["r_max"] = r_max;
  manifest["master_seed"] = seed;
  manifest["rng"] = SplitMix64::name();
  manifest["config_hash"] = config_hash(cfg);
  manifest["wall_clock_seconds"] = secs;
  manifest["failures"] = summary.failures;
  json seeds = json::array();
  for (const auto& rec : summary.records) seeds.push_back(rec.seed);
  manifest["replication_seeds"] = seeds;
  write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");

  std::cout << summary_text(summary, plan);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalised QML estimation of network-spillover panels with interactive "
               "fixed effects"};
  app.require_subcommand(1);

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "Simulate a panel and its weights matrices");
  sim->add_option("--config", sa.config, "JSON config file");
  sim->add_option("--design", sa.design, "design name (table1)");
  sim->add_option("--n", sa.n, "cross-section size");
  sim->add_option("--t", sa.t, "time periods");
  sim->add_option("--seed", sa.seed, "RNG seed");
  sim->add_option("--out", sa.out, "output directory");
  sim->add_flag("--emit-truth", sa.emit_truth, "also write truth.json");
  sim->add_flag("--create", sa.create, "create the output directory");

  EstimateArgs ea;
  CLI::App* est = app.add_subcommand("estimate", "Estimate from panel and weights files");
  est->add_option("--config", ea.config, "JSON config file");
  est->add_option("--panel", ea.panel, "panel CSV (long format)");
  est->add_option("--weights", ea.weights, "weights manifest JSON");
  est->add_option("--r-max", ea.r_max, "factor-count upper bound");
  est->add_option("--fix-r", ea.fix_r, "fix the factor count (skips selection)");
  est->add_option("--gamma", ea.gamma, "fix both penalty levels (skips IC*)");
  est->add_option("--zeta", ea.zeta, "adaptive-weight exponent");
  est->add_option("--seed", ea.seed, "optimizer multistart seed");
  est->add_option("--out", ea.out, "output directory");
  est->add_flag("--create", ea.create, "create the output directory");

  MontecarloArgs ma;
  CLI::App* mc = app.add_subcommand("montecarlo", "Replicated simulation-estimation experiment");
  mc->add_option("--config", ma.config, "JSON config file");
  mc->add_option("--design", ma.design, "design name (table1)");
  mc->add_option("--n", ma.n, "cross-section size");
  mc->add_option("--t", ma.t, "time periods");
  mc->add_option("--reps", ma.reps, "replications");
  mc->add_option("--r-max", ma.r_max, "factor-count upper bound");
  mc->add_option("--fix-r", ma.fix_r, "fixed estimation R (default: the design's R0)");
  mc->add_flag("--pipeline", ma.pipeline, "select R per replication (factor-count study)");
  mc->add_option("--seed", ma.seed, "master seed");
  mc->add_option("--threads", ma.threads, "worker threads (0 = all)");
  mc->add_option("--out", ma.out, "output directory");
  mc->add_flag("--create", ma.create, "create the output directory");

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(sim, sa);
    if (est->parsed()) return cmd_estimate(est, ea);
    if (mc->parsed()) return cmd_montecarlo(mc, ma);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IngestionError& e) {
    std::cerr << "ingestion error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
}
