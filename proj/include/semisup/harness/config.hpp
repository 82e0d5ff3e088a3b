#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semisup/tensor/errors.hpp"

namespace semisup::harness {

// Every hyperparameter and ablation flag of one run; a config plus its seed
// fully determines the outcome. Defaults follow the ConvNet training recipe
// (Adam 0.003/0.9/0.999, eps 1e-8, sigmoid ramps, two-phase beta2 and EMA
// decay 0.99 -> 0.999), with desk-scale step counts; the paper-scale step
// budgets live in named presets.
struct ExperimentConfig {
  // data
  std::string dataset = "two_moons";  // two_moons | glyphs | idx
  std::uint64_t n = 1006;             // synthetic training-set size
  std::uint64_t test_n = 1000;
  double moons_sigma = 0.1;
  std::uint64_t image_size = 12;      // glyphs
  double glyph_noise = 0.12;
  std::uint64_t glyph_translate = 2;
  double glyph_min_intensity = 0.7;
  double glyph_pixel_dropout = 0.05;
  std::string train_images, train_labels, test_images, test_labels;  // idx paths
  std::string normalize = "standardize";  // none | standardize | zca
  bool flatten = false;                   // reshape image features to flat vectors
  double zca_epsilon = 1e-5;
  std::uint64_t labels_per_class = 3;
  std::uint64_t extra_unlabeled = 0;  // synthetic extra pool, streamed unlabeled
  bool streaming = true;
  double holdout_fraction = 0.0;      // labeled validation split used as the test set

  // model
  std::string model = "mlp";  // mlp | smallconv | convnet | layers
  std::string hidden = "32,32";
  double mlp_dropout = 0.0;
  std::string model_layers;   // explicit layer list (model = layers)
  std::uint64_t conv_width = 16;
  double input_sigma = 0.15;
  double dropout = 0.5;
  bool weight_norm = true;
  bool mean_only_bn = true;
  double lrelu_slope = 0.1;
  std::uint64_t heads = 1;

  // augmentation and per-side noise toggles
  std::uint64_t translate_max = 2;  // images only
  bool flip = false;
  bool reflect_border = false;
  bool student_augment = true, teacher_augment = true;
  bool student_input_noise = true, teacher_input_noise = true;
  bool student_dropout = true, teacher_dropout = true;
  bool pi_share_augment = false;

  // algorithm and costs
  std::string algorithm = "mean_teacher";
  std::string consistency = "mse";  // mse | kl | c_tau
  double consistency_tau = 0.5;
  double consistency_weight = 1.0;
  std::uint64_t consistency_rampup = kScaled;
  double coupling_weight = 0.01;  // engages with heads = 2
  double te_decay = 0.6;

  // optimizer and schedules
  double lr = 0.003;
  double adam_beta1 = 0.9;
  double adam_eps = 1e-8;
  double adam_beta2_before = 0.99, adam_beta2_after = 0.999;
  double ema_decay_before = 0.99, ema_decay_after = 0.999;
  std::uint64_t phase_switch = kScaled;
  std::uint64_t rampup = kScaled;  // learning-rate ramp-up steps
  bool rampdown = false;
  std::uint64_t rampdown_window = kScaled;  // last X steps when enabled
  double beta1_floor = 0.5;
  std::uint64_t cosine_horizon = 0;  // 0 = off
  double bn_decay = 0.999;           // mean-only batch norm running-mean decay

  // run
  std::uint64_t steps = kScaled;  // 5000 two_moons, 20000 image sets
  std::uint64_t batch_labeled = 1, batch_unlabeled = 99;
  std::string sampling = "quota";  // quota | mixed
  std::uint64_t batch_size = 100;  // mixed mode
  bool sampler_reuse = true;
  std::string precision = "f32";  // f32 | f64
  std::uint64_t seed = 1;
  std::uint64_t eval_every = 250;
  std::string eval_target = "teacher";
  std::uint64_t checkpoint_every = 0;  // 0 = final checkpoint only
  std::string run_dir;
  std::string preset;

  static constexpr std::uint64_t kScaled = UINT64_MAX;  // derive from steps

  bool is_image_dataset() const { return dataset != "two_moons"; }
};

// Parses a key=value config file ('#' comments); later entries and the
// override list win. Applies the preset bundle first, derives the scaled
// schedule defaults, and validates everything, reporting every violation at
// once.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

// Same pipeline without a file (defaults + overrides only).
ExperimentConfig make_config(const std::vector<std::pair<std::string, std::string>>& overrides);

// Canonical echo: every key explicit, parseable, stable order. Reparsing the
// echo reproduces the run bit for bit.
std::string echo_config(const ExperimentConfig& cfg);

std::uint64_t config_hash(const ExperimentConfig& cfg);

// Applies one key (sweep axes reuse the parser's setters). Throws ConfigError
// for unknown keys.
void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

bool is_sweepable_key(const std::string& key);

// Post-override derivation + validation (parse_config/make_config call this;
// sweeps re-run it after editing a finalized config).
void finalize_config(ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);  // throws with the full violation list

}  // namespace semisup::harness
