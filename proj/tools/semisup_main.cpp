// semisup: train / sweep / eval / export-data for the semi-supervised engine.
//
// Config keys come from a key=value file (--config) and/or --key=value
// overrides on the command line; overrides win. Exit codes: 0 success,
// 2 config, 3 io, 4 numeric abort, 5 shape, 6 value, 1 internal.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "semisup/harness/sweep.hpp"
#include "semisup/kernels/kernels.hpp"

namespace {

using namespace semisup;
using harness::ExperimentConfig;

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& raw : extras) {
    std::string s = raw;
    if (s.rfind("--", 0) == 0) s = s.substr(2);
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + raw + "' is not of the form --key=value");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

ExperimentConfig load_config(const std::string& config_path,
                             const std::vector<std::string>& extras) {
  const auto overrides = parse_overrides(extras);
  return config_path.empty() ? harness::make_config(overrides)
                             : harness::parse_config(config_path, overrides);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Numeric: return "numeric";
    case ErrorCategory::Shape: return "shape";
    case ErrorCategory::Value: return "value";
    case ErrorCategory::Internal: return "internal";
  }
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised training engine (mean teacher, pi model, temporal "
               "ensembling, supervised baseline)"};
  app.require_subcommand(1);

  std::string config_path, resume_path, checkpoint_path, out_dir;
  std::string axis, values_csv, seeds_csv = "1";
  std::size_t jobs = 0;

  auto* train_cmd = app.add_subcommand("train", "run one experiment");
  train_cmd->add_option("--config", config_path, "key=value config file");
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
  train_cmd->allow_extras();

  auto* sweep_cmd = app.add_subcommand("sweep", "grid sweep over one hyperparameter");
  sweep_cmd->add_option("--config", config_path, "key=value config file");
  sweep_cmd->add_option("--axis", axis, "config key to sweep")->required();
  sweep_cmd->add_option("--values", values_csv, "comma-separated values")->required();
  sweep_cmd->add_option("--seeds", seeds_csv, "comma-separated seeds (default: 1)");
  sweep_cmd->add_option("--out", out_dir, "sweep output directory");
  sweep_cmd->add_option("--jobs", jobs, "parallel worker slots (default: cores)");
  sweep_cmd->allow_extras();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
  eval_cmd->add_option("--config", config_path, "key=value config file");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->allow_extras();

  auto* export_cmd = app.add_subcommand("export-data", "write the synthetic dataset to disk");
  export_cmd->add_option("--config", config_path, "key=value config file");
  export_cmd->add_option("--out", out_dir, "output directory")->required();
  export_cmd->allow_extras();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      auto cfg = load_config(config_path, train_cmd->remaining());
      const auto res = resume_path.empty() ? harness::run_experiment(cfg)
                                           : harness::resume_experiment(cfg, resume_path);
      std::printf("run_dir: %s\n", res.run_dir.c_str());
      std::printf("kernels: %s\n", kernels::backend_name(kernels::active_backend()));
      std::printf("headline (%s) test error: %.4f\n", cfg.eval_target.c_str(),
                  res.headline_err);
      std::printf("student test error: %.4f | teacher test error: %.4f\n",
                  res.student_test_err, res.teacher_test_err);
      std::printf("wall seconds: %.1f\n", res.wall_seconds);
    } else if (sweep_cmd->parsed()) {
      auto cfg = load_config(config_path, sweep_cmd->remaining());
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_csv(seeds_csv)) seeds.push_back(std::stoull(s));
      if (out_dir.empty()) out_dir = harness::default_run_dir(cfg) + "_sweep_" + axis;
      const auto res =
          harness::run_sweep(cfg, axis, split_csv(values_csv), seeds, out_dir, jobs);
      std::printf("sweep rows: %zu -> %s\n", res.rows.size(), res.csv_path.c_str());
      for (const auto& m : res.means)
        std::printf("%s=%s: mean teacher err %.4f | mean student err %.4f\n", axis.c_str(),
                    m.value.c_str(), m.teacher_err, m.student_err);
    } else if (eval_cmd->parsed()) {
      auto cfg = load_config(config_path, eval_cmd->remaining());
      const auto rep = harness::eval_checkpoint(cfg, checkpoint_path);
      std::printf("teacher test error: %.4f (cost %.4f)\n", rep.teacher_err, rep.teacher_cost);
      std::printf("student test error: %.4f (cost %.4f)\n", rep.student_err, rep.student_cost);
      std::printf("headline (%s): %.4f\n", cfg.eval_target.c_str(),
                  cfg.eval_target == "teacher" ? rep.teacher_err : rep.student_err);
    } else if (export_cmd->parsed()) {
      auto cfg = load_config(config_path, export_cmd->remaining());
      harness::export_dataset(cfg, out_dir);
      std::printf("dataset '%s' written to %s\n", cfg.dataset.c_str(), out_dir.c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: category=%s %s\n", category_name(e.category()), e.what());
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: category=internal %s\n", e.what());
    return 1;
  }
  return 0;
}
