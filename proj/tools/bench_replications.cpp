// Wall-clock comparison of the serial reference path against the
// OpenMP-parallel replication loop, plus a summary-equality check.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "spillover/montecarlo.hpp"

using namespace spillover;

namespace {

double run_timed(const ExperimentPlan& plan, int threads, ExperimentSummary* out) {
  const auto t0 = std::chrono::steady_clock::now();
  *out = run_experiment(plan, threads);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 8;
  int n = argc > 2 ? std::atoi(argv[2]) : 25;
  int T = argc > 3 ? std::atoi(argv[3]) : 25;

  ExperimentPlan plan;
  plan.design = table1_design(n, T);
  plan.replications = reps;
  plan.master_seed = 42;
  plan.estimation.grid_points = 6;

  ExperimentSummary serial, parallel;
  const double t_serial = run_timed(plan, 1, &serial);
  const int threads = omp_get_max_threads();
  const double t_parallel = run_timed(plan, threads, &parallel);

  const double diff = (serial.mean_bias_corrected - parallel.mean_bias_corrected)
                          .cwiseAbs()
                          .maxCoeff();
  std::cout << "replications:      " << reps << "  (n=" << n << ", T=" << T << ")\n"
            << "serial (1 thread): " << t_serial << " s\n"
            << "openmp (" << threads << " threads): " << t_parallel << " s\n"
            << "speedup:           " << t_serial / t_parallel << "x\n"
            << "summary delta:     " << diff << (diff == 0.0 ? "  (identical)" : "") << "\n";
  return diff == 0.0 ? 0 : 1;
}
