#pragma once

#include <set>
#include <string>

#include "spillover/dgp.hpp"
#include "spillover/selection.hpp"

namespace spillover {

/// A replicated simulation-estimation experiment. In fixed-R mode the
/// estimation inputs R_used factors throughout; in pipeline mode each
/// replication selects its own factor count under R_max.
struct ExperimentPlan {
  SimulationDesign design;
  int replications = 100;
  bool pipeline_mode = false;
  int R_used = -1;  // fixed-R mode; defaults to the design's R0 when negative
  int R_max = 6;
  std::uint64_t master_seed = 1;
  PipelineConfig estimation;
  std::set<std::string> outputs{"bias", "coverage", "zeros"};

  void validate() const;
};

struct ReplicationRecord {
  bool ok = false;
  std::string error;
  std::uint64_t seed = 0;
  Vector estimate;             // stacked, exact zeros off support
  Vector corrected;            // bias-corrected (support entries; zero elsewhere)
  Vector se;                   // zero off support
  std::vector<char> selected;  // per parameter
  int R_selected = 0;
  std::map<std::string, int> R_by_variant;
};

struct ExperimentSummary {
  std::vector<std::string> parameter_names;
  Vector theta0;
  int replications = 0;
  int failures = 0;

  // Per parameter, over successful replications. Bias and coverage for a
  // nonzero parameter condition on it being selected (the nonzero-parameter
  // tables); unconditional variants count unselected replications as misses.
  Vector mean_bias_corrected;
  Vector mean_bias_raw;
  Vector coverage;
  Vector coverage_unconditional;
  Vector percent_zero;     // fraction of replications estimated exactly zero
  Vector selection_rate;   // 1 - percent_zero
  std::map<std::string, double> factor_selection_rate;  // fraction with R* = R0

  std::vector<ReplicationRecord> records;
};

/// Runs the plan. Replications are the unit of parallelism: each derives its
/// own seed from (master_seed, index), so the summary does not depend on
/// execution order or thread count. threads = 1 forces the serial reference
/// path; 0 uses the OpenMP default. More than 5% failed replications raise
/// ExperimentFailureError carrying the per-replication messages.
ExperimentSummary run_experiment(const ExperimentPlan& plan, int threads = 0);

/// summary.csv: one row per parameter with bias, coverage and zero rates,
/// then one row per IC variant.
std::string summary_csv(const ExperimentSummary& summary, const ExperimentPlan& plan);

/// Aligned text tables mirroring the simulation study's layout.
std::string summary_text(const ExperimentSummary& summary, const ExperimentPlan& plan);

/// Per-replication CSV log.
std::string replication_csv(const ExperimentSummary& summary);

}  // namespace spillover
