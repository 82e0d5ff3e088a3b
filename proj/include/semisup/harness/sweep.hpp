#pragma once

#include "semisup/harness/experiment.hpp"

namespace semisup::harness {

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  double teacher_err = 1.0;
  double student_err = 1.0;
};

struct SweepMean {
  std::string value;
  double teacher_err = 1.0;
  double student_err = 1.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;    // exactly |values| x |seeds|
  std::vector<SweepMean> means;  // one per value
  std::string csv_path;          // per-run rows
  std::string means_path;        // per-value means
};

// Grid sweep over one config key: |values| x |seeds| runs in parallel worker
// slots, merged deterministically by (value, seed) order. The axis must be a
// sweepable hyperparameter key.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                      std::size_t jobs = 0);

}  // namespace semisup::harness
