#include "semisup/harness/sweep.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

namespace semisup::harness {

namespace {

std::string sanitize(const std::string& v) {
  std::string out;
  for (char c : v)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                      std::size_t jobs) {
  if (!is_sweepable_key(axis))
    throw ConfigError("sweep: '" + axis + "' is not a sweepable hyperparameter key");
  if (values.empty()) throw ConfigError("sweep: no values given");
  if (seeds.empty()) throw ConfigError("sweep: no seeds given");
  std::filesystem::create_directories(out_dir);

  struct Task {
    ExperimentConfig cfg;
    std::size_t vi, si;
  };
  std::vector<Task> tasks;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      ExperimentConfig cfg = base;
      set_config_key(cfg, axis, values[vi]);
      cfg.seed = seeds[si];
      cfg.run_dir = out_dir + "/" + axis + "_" + sanitize(values[vi]) + "_seed" +
                    std::to_string(seeds[si]);
      validate_config(cfg);
      tasks.push_back({std::move(cfg), vi, si});
    }
  }

  std::vector<SweepRow> rows(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const RunResult r = run_experiment(tasks[i].cfg);
        rows[i] = SweepRow{values[tasks[i].vi], seeds[tasks[i].si], r.teacher_test_err,
                           r.student_test_err};
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };

  if (jobs == 0)
    jobs = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(),
                                                          tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j + 1 < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (!failures[i].empty())
      throw Error(ErrorCategory::Internal,
                  "sweep: run " + tasks[i].cfg.run_dir + " failed: " + failures[i]);

  SweepResult result;
  result.rows = std::move(rows);
  result.csv_path = out_dir + "/sweep.csv";
  result.means_path = out_dir + "/sweep_means.csv";

  std::string csv = "# semisup-sweep-v1\n" + axis + ",seed,teacher_test_err,student_test_err\n";
  for (const auto& row : result.rows)
    csv += row.value + "," + std::to_string(row.seed) + "," + fmt(row.teacher_err) + "," +
           fmt(row.student_err) + "\n";
  std::ofstream(result.csv_path, std::ios::binary) << csv;

  std::string means = "# semisup-sweep-means-v1\n" + axis +
                      ",runs,mean_teacher_test_err,mean_student_test_err\n";
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    double te = 0, se = 0;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& row = result.rows[vi * seeds.size() + si];
      te += row.teacher_err;
      se += row.student_err;
    }
    te /= static_cast<double>(seeds.size());
    se /= static_cast<double>(seeds.size());
    result.means.push_back(SweepMean{values[vi], te, se});
    means += values[vi] + "," + std::to_string(seeds.size()) + "," + fmt(te) + "," + fmt(se) + "\n";
  }
  std::ofstream(result.means_path, std::ios::binary) << means;
  return result;
}

}  // namespace semisup::harness
