#include "spillover/montecarlo.hpp"

#include <omp.h>

#include <cmath>
#include <sstream>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kZ975 = 1.959964;

ReplicationRecord run_one(const ExperimentPlan& plan, int rep_index) {
  ReplicationRecord rec;
  rec.seed = SplitMix64(plan.master_seed).split(static_cast<std::uint64_t>(rep_index)).next_u64();
  try {
    SimulationDesign design = plan.design;
    design.seed = rec.seed;
    const SimulatedTruth truth = simulate(design);

    PipelineConfig est = plan.estimation;
    if (plan.pipeline_mode) {
      est.fix_R = -1;
    } else {
      est.fix_R = plan.R_used >= 0 ? plan.R_used : plan.design.R0;
    }
    const EstimationReport report =
        full_pipeline(truth.panel, design.weights, plan.R_max, est);

    const int P = report.P;
    rec.estimate = Vector::Zero(P);
    rec.corrected = Vector::Zero(P);
    rec.se = Vector::Zero(P);
    rec.selected.assign(P, 0);
    for (int p = 0; p < P; ++p) {
      const auto& c = report.coefficients[p];
      rec.estimate[p] = c.estimate;
      rec.corrected[p] = c.corrected;
      rec.se[p] = c.se;
      rec.selected[p] = c.selected ? 1 : 0;
    }
    rec.R_selected = report.R_selected;
    rec.R_by_variant = report.R_by_variant;
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

void ExperimentPlan::validate() const {
  if (replications < 1) throw InvalidArgumentError("replications must be >= 1");
  design.validate();
  if (pipeline_mode && R_max < 1) throw InvalidArgumentError("pipeline mode needs R_max >= 1");
  if (!pipeline_mode) {
    const int r = R_used >= 0 ? R_used : design.R0;
    if (r < 0 || r >= std::min(design.n, design.T)) {
      throw InvalidArgumentError("fixed estimation R out of range");
    }
  }
}

ExperimentSummary run_experiment(const ExperimentPlan& plan, int threads) {
  plan.validate();
  const int reps = plan.replications;

  std::vector<ReplicationRecord> records(reps);
  if (threads == 1) {
    for (int r = 0; r < reps; ++r) records[r] = run_one(plan, r);
  } else {
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : omp_get_max_threads())
    for (int r = 0; r < reps; ++r) records[r] = run_one(plan, r);
  }

  ExperimentSummary sum;
  sum.records = records;
  sum.replications = reps;

  PanelData layout;
  layout.own_lag = plan.design.own_lag;
  layout.lag_channels = plan.design.lag_channels;
  layout.X_star.resize(plan.design.Kstar());
  sum.parameter_names = coefficient_names(layout, plan.design.weights.size());
  sum.theta0 = plan.design.theta0.stacked();
  const int P = static_cast<int>(sum.theta0.size());

  for (const auto& rec : records) {
    if (!rec.ok) ++sum.failures;
  }
  if (sum.failures * 20 > reps) {
    std::ostringstream os;
    os << "experiment failed: " << sum.failures << "/" << reps << " replications errored\n";
    for (int r = 0; r < reps; ++r) {
      if (!records[r].ok) os << "  replication " << r << ": " << records[r].error << '\n';
    }
    throw ExperimentFailureError(os.str());
  }

  sum.mean_bias_corrected = Vector::Zero(P);
  sum.mean_bias_raw = Vector::Zero(P);
  sum.coverage = Vector::Zero(P);
  sum.coverage_unconditional = Vector::Zero(P);
  sum.percent_zero = Vector::Zero(P);
  sum.selection_rate = Vector::Zero(P);

  Vector n_selected = Vector::Zero(P);
  int n_ok = 0;
  for (const auto& rec : records) {
    if (!rec.ok) continue;
    ++n_ok;
    for (int p = 0; p < P; ++p) {
      if (rec.selected[p]) {
        n_selected[p] += 1;
        sum.mean_bias_corrected[p] += rec.corrected[p] - sum.theta0[p];
        sum.mean_bias_raw[p] += rec.estimate[p] - sum.theta0[p];
        if (std::abs(rec.corrected[p] - sum.theta0[p]) <= kZ975 * rec.se[p]) {
          sum.coverage[p] += 1;
          sum.coverage_unconditional[p] += 1;
        }
      } else {
        sum.percent_zero[p] += 1;
      }
    }
    for (const auto& [name, R] : rec.R_by_variant) {
      if (R == plan.design.R0) sum.factor_selection_rate[name] += 1;
    }
  }
  if (n_ok > 0) {
    for (int p = 0; p < P; ++p) {
      sum.percent_zero[p] /= n_ok;
      sum.selection_rate[p] = 1.0 - sum.percent_zero[p];
      sum.coverage_unconditional[p] /= n_ok;
      if (n_selected[p] > 0) {
        sum.mean_bias_corrected[p] /= n_selected[p];
        sum.mean_bias_raw[p] /= n_selected[p];
        sum.coverage[p] /= n_selected[p];
      }
    }
    for (auto& [name, v] : sum.factor_selection_rate) v /= n_ok;
  }
  return sum;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string summary_csv(const ExperimentSummary& sum, const ExperimentPlan& plan) {
  std::ostringstream os;
  os << "parameter,truth,selection_rate,percent_zero,mean_bias_corrected,mean_bias_raw,"
        "coverage,coverage_unconditional\n";
  const int P = static_cast<int>(sum.theta0.size());
  for (int p = 0; p < P; ++p) {
    os << sum.parameter_names[p] << ',' << fmt(sum.theta0[p]) << ',' << fmt(sum.selection_rate[p])
       << ',' << fmt(sum.percent_zero[p]) << ',' << fmt(sum.mean_bias_corrected[p]) << ','
       << fmt(sum.mean_bias_raw[p]) << ',' << fmt(sum.coverage[p]) << ','
       << fmt(sum.coverage_unconditional[p]) << '\n';
  }
  for (const auto& [name, rate] : sum.factor_selection_rate) {
    os << "factor_" << name << ',' << plan.design.R0 << ',' << fmt(rate) << ",,,,,\n";
  }
  return os.str();
}

std::string replication_csv(const ExperimentSummary& sum) {
  std::ostringstream os;
  os << "replication,ok,seed,R_selected";
  for (const auto& name : sum.parameter_names) os << ",est_" << name << ",se_" << name;
  os << ",error\n";
  os.precision(10);
  for (size_t r = 0; r < sum.records.size(); ++r) {
    const auto& rec = sum.records[r];
    os << r << ',' << (rec.ok ? 1 : 0) << ',' << rec.seed << ',' << rec.R_selected;
    const int P = static_cast<int>(sum.theta0.size());
    for (int p = 0; p < P; ++p) {
      if (rec.ok) {
        os << ',' << rec.corrected[p] << ',' << rec.se[p];
      } else {
        os << ",,";
      }
    }
    os << ',' << rec.error << '\n';
  }
  return os.str();
}

std::string summary_text(const ExperimentSummary& sum, const ExperimentPlan& plan) {
  std::ostringstream os;
  const int P = static_cast<int>(sum.theta0.size());
  os << "Experiment: n=" << plan.design.n << " T=" << plan.design.T
     << " replications=" << sum.replications << " failures=" << sum.failures << "\n\n";

  auto row = [&](const std::string& name, double v) {
    os << "  " << name;
    for (size_t i = name.size(); i < 12; ++i) os << ' ';
    os << fmt(v) << '\n';
  };

  if (plan.outputs.count("bias")) {
    os << "Bias of bias-corrected estimates (nonzero parameters)\n";
    for (int p = 0; p < P; ++p) {
      if (sum.theta0[p] != 0.0) row(sum.parameter_names[p], sum.mean_bias_corrected[p]);
    }
    os << '\n';
  }
  if (plan.outputs.count("coverage")) {
    os << "Coverage of nonzero parameter estimates (nominal 0.95)\n";
    for (int p = 0; p < P; ++p) {
      if (sum.theta0[p] != 0.0) row(sum.parameter_names[p], sum.coverage[p]);
    }
    os << '\n';
  }
  if (plan.outputs.count("zeros")) {
    os << "Percentage of true zeros\n";
    for (int p = 0; p < P; ++p) {
      if (sum.theta0[p] == 0.0) row(sum.parameter_names[p], 100.0 * sum.percent_zero[p]);
    }
    os << '\n';
  }
  if (plan.outputs.count("factor_selection") && !sum.factor_selection_rate.empty()) {
    os << "True number of factors selected (%)\n";
    for (const auto& [name, rate] : sum.factor_selection_rate) row(name, 100.0 * rate);
    os << '\n';
  }
  return os.str();
}

}  // namespace spillover
