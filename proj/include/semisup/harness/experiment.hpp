#pragma once

#include "semisup/harness/config.hpp"

namespace semisup::harness {

struct RunResult {
  std::string run_dir;
  std::uint64_t steps = 0;
  double student_train_err = 1.0, teacher_train_err = 1.0;
  double student_test_err = 1.0, teacher_test_err = 1.0;
  double headline_err = 1.0;  // eval_target side, test set
  double final_total_cost = 0.0;
  double wall_seconds = 0.0;
};

// Executes the configured run: writes config.txt (echo), metrics.csv (one row
// per evaluation tick, deterministic bytes), summary.txt and
// checkpoint_final.ckpt into the run directory. A non-finite loss aborts with
// checkpoint_lastgood.ckpt retained and a NumericError thrown.
RunResult run_experiment(const ExperimentConfig& cfg);

// Same, resuming bit-identically from a checkpoint produced by an identical
// config.
RunResult resume_experiment(const ExperimentConfig& cfg, const std::string& checkpoint_path);

struct EvalReport {
  double student_err = 1.0, teacher_err = 1.0;
  double student_cost = 0.0, teacher_cost = 0.0;
};

// Rebuilds the data/model from the config and evaluates checkpoint weights on
// the test set.
EvalReport eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path);

// Writes the configured synthetic dataset in raw (un-normalized) form:
// glyphs/idx as IDX files, two_moons as CSV.
void export_dataset(const ExperimentConfig& cfg, const std::string& out_dir);

// Run-root resolution: $SEMISUP_RUN_ROOT or ./runs, plus a default name.
std::string default_run_dir(const ExperimentConfig& cfg);

}  // namespace semisup::harness
