#pragma once

#include <string>

#include "spillover/dgp.hpp"
#include "spillover/selection.hpp"

namespace spillover {

/// Which derived covariates the loader should build from a raw panel.
struct PanelLayout {
  bool own_lag = false;
  std::vector<int> lag_channels;       // 0-based channel indices
  std::vector<int> interact_channels;  // channels interacted with the first primitive
};

/// Long-format panel CSV with header unit_id,time_id,y,x1,...,xK.
/// Dynamic panels carry one presample period (the earliest time_id) whose y
/// seeds the lag and whose covariate cells are written as 0 and ignored on
/// load. Units and times must form a complete rectangle.
void save_panel_csv(const PanelData& data, const std::string& path);

/// Inverse of save_panel_csv: derives lags and interactions internally from
/// the requested layout; they are never ingested. Throws IngestionError with
/// the offending line on malformed input.
PanelData load_panel_csv(const std::string& path, const WeightsSet& weights,
                         const PanelLayout& layout);

void save_truth_json(const SimulatedTruth& truth, const SimulationDesign& design,
                     const std::string& path);

std::string report_to_json(const EstimationReport& report);
EstimationReport report_from_json(const std::string& text);
void save_report_json(const EstimationReport& report, const std::string& path);
EstimationReport load_report_json(const std::string& path);

/// Human-readable coefficient table.
std::string report_text(const EstimationReport& report);

void save_gamma_trace_csv(const EstimationReport& report, const std::string& path);
void save_factor_trace_csv(const EstimationReport& report, const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace spillover
