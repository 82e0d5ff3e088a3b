#include "semisup/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "semisup/train/trainer.hpp"

namespace semisup::harness {

namespace {

struct KeyDef {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool sweepable;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError(key + ": not a number: '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError(key + ": not a nonnegative integer: '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

#define STR_KEY(field, sweep)                                                       \
  KeyDef{#field, [](ExperimentConfig& c, const std::string& v) { c.field = v; },    \
         [](const ExperimentConfig& c) { return c.field; }, sweep}
#define U64_KEY(field, sweep)                                                       \
  KeyDef{#field,                                                                    \
         [](ExperimentConfig& c, const std::string& v) { c.field = parse_u64(#field, v); }, \
         [](const ExperimentConfig& c) { return std::to_string(c.field); }, sweep}
#define DBL_KEY(field, sweep)                                                       \
  KeyDef{#field,                                                                    \
         [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(#field, v); }, \
         [](const ExperimentConfig& c) { return fmt_double(c.field); }, sweep}
#define BOOL_KEY(field, sweep)                                                      \
  KeyDef{#field,                                                                    \
         [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(#field, v); }, \
         [](const ExperimentConfig& c) { return c.field ? "true" : "false"; }, sweep}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      STR_KEY(dataset, false),
      U64_KEY(n, true),
      U64_KEY(test_n, false),
      DBL_KEY(moons_sigma, true),
      U64_KEY(image_size, false),
      DBL_KEY(glyph_noise, true),
      U64_KEY(glyph_translate, true),
      DBL_KEY(glyph_min_intensity, true),
      DBL_KEY(glyph_pixel_dropout, true),
      STR_KEY(train_images, false),
      STR_KEY(train_labels, false),
      STR_KEY(test_images, false),
      STR_KEY(test_labels, false),
      STR_KEY(normalize, false),
      BOOL_KEY(flatten, false),
      DBL_KEY(zca_epsilon, true),
      U64_KEY(labels_per_class, true),
      U64_KEY(extra_unlabeled, true),
      BOOL_KEY(streaming, false),
      DBL_KEY(holdout_fraction, false),

      STR_KEY(model, false),
      STR_KEY(hidden, false),
      DBL_KEY(mlp_dropout, true),
      STR_KEY(model_layers, false),
      U64_KEY(conv_width, true),
      DBL_KEY(input_sigma, true),
      DBL_KEY(dropout, true),
      BOOL_KEY(weight_norm, true),
      BOOL_KEY(mean_only_bn, true),
      DBL_KEY(lrelu_slope, true),
      U64_KEY(heads, true),

      U64_KEY(translate_max, true),
      BOOL_KEY(flip, true),
      BOOL_KEY(reflect_border, true),
      BOOL_KEY(student_augment, true),
      BOOL_KEY(teacher_augment, true),
      BOOL_KEY(student_input_noise, true),
      BOOL_KEY(teacher_input_noise, true),
      BOOL_KEY(student_dropout, true),
      BOOL_KEY(teacher_dropout, true),
      BOOL_KEY(pi_share_augment, true),

      STR_KEY(algorithm, true),
      STR_KEY(consistency, true),
      DBL_KEY(consistency_tau, true),
      DBL_KEY(consistency_weight, true),
      U64_KEY(consistency_rampup, true),
      DBL_KEY(coupling_weight, true),
      DBL_KEY(te_decay, true),

      DBL_KEY(lr, true),
      DBL_KEY(adam_beta1, true),
      DBL_KEY(adam_eps, false),
      DBL_KEY(adam_beta2_before, true),
      DBL_KEY(adam_beta2_after, true),
      DBL_KEY(ema_decay_before, true),
      DBL_KEY(ema_decay_after, true),
      U64_KEY(phase_switch, true),
      U64_KEY(rampup, true),
      BOOL_KEY(rampdown, true),
      U64_KEY(rampdown_window, true),
      DBL_KEY(beta1_floor, true),
      U64_KEY(cosine_horizon, true),
      DBL_KEY(bn_decay, true),

      U64_KEY(steps, true),
      U64_KEY(batch_labeled, true),
      U64_KEY(batch_unlabeled, true),
      STR_KEY(sampling, true),
      U64_KEY(batch_size, true),
      BOOL_KEY(sampler_reuse, false),
      STR_KEY(precision, false),
      U64_KEY(seed, false),
      U64_KEY(eval_every, false),
      STR_KEY(eval_target, false),
      U64_KEY(checkpoint_every, false),
      STR_KEY(run_dir, false),
  };
  return table;
}

#undef STR_KEY
#undef U64_KEY
#undef DBL_KEY
#undef BOOL_KEY

const KeyDef* find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (name == k.name) return &k;
  return nullptr;
}

// named bundles; explicit keys override them
void apply_preset(ExperimentConfig& cfg, const std::string& preset,
                  std::vector<std::string>& errors) {
  auto set = [&](const char* k, const std::string& v) { set_config_key(cfg, k, v); };
  if (preset.empty()) return;
  if (preset == "paper_svhn_semisup") {
    set("steps", "180000");
    set("rampup", "40000");
    set("consistency_rampup", "40000");
    set("phase_switch", "40000");
    set("batch_labeled", "1");
    set("batch_unlabeled", "99");
    set("sampling", "quota");
    set("normalize", "standardize");
    set("flip", "false");
    set("adam_beta2_before", "0.99");
    set("adam_beta2_after", "0.999");
    set("ema_decay_before", "0.99");
    set("ema_decay_after", "0.999");
    set("rampdown", "false");
  } else if (preset == "paper_svhn_supervised") {
    set("steps", "180000");
    set("rampup", "40000");
    set("phase_switch", "40000");
    set("sampling", "quota");
    set("batch_labeled", "100");
    set("batch_unlabeled", "0");
    set("normalize", "standardize");
    set("flip", "false");
    set("algorithm", "supervised");
    set("consistency_weight", "0");
  } else if (preset == "paper_cifar_semisup") {
    set("steps", "150000");
    set("rampup", "40000");
    set("consistency_rampup", "40000");
    set("phase_switch", "40000");
    set("sampling", "mixed");
    set("batch_size", "100");
    set("normalize", "zca");
    set("flip", "true");
    set("adam_beta2_before", "0.999");
    set("adam_beta2_after", "0.999");
    set("ema_decay_before", "0.999");
    set("ema_decay_after", "0.999");
    set("rampdown", "true");
    set("rampdown_window", "25000");
  } else {
    errors.push_back("preset: unknown preset '" + preset +
                     "' (paper_svhn_semisup|paper_svhn_supervised|paper_cifar_semisup)");
  }
}

}  // namespace

void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") {
    cfg.preset = value;
    return;
  }
  if (key == "ema_decay") {  // composite: both phases, the Figure-3(c) sweep axis
    const double v = parse_double(key, value);
    cfg.ema_decay_before = v;
    cfg.ema_decay_after = v;
    return;
  }
  const KeyDef* def = find_key(key);
  if (!def) throw ConfigError("unknown key '" + key + "'");
  def->set(cfg, value);
}

bool is_sweepable_key(const std::string& key) {
  if (key == "ema_decay") return true;
  const KeyDef* def = find_key(key);
  return def && def->sweepable;
}

void finalize_config(ExperimentConfig& cfg) {
  if (cfg.steps == ExperimentConfig::kScaled)
    cfg.steps = cfg.is_image_dataset() ? 20000 : 5000;
  // ramp windows default to the recipe's proportions: ramp-ups span 2/9 of
  // training (40000 of 180000), the ramp-down covers the last sixth
  const std::uint64_t scaled = std::max<std::uint64_t>(1, cfg.steps * 2 / 9);
  if (cfg.rampup == ExperimentConfig::kScaled) cfg.rampup = scaled;
  if (cfg.consistency_rampup == ExperimentConfig::kScaled) cfg.consistency_rampup = scaled;
  if (cfg.phase_switch == ExperimentConfig::kScaled) cfg.phase_switch = scaled;
  if (cfg.rampdown_window == ExperimentConfig::kScaled)
    cfg.rampdown_window = std::max<std::uint64_t>(1, cfg.steps / 6);
}

void validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };

  require(cfg.dataset == "two_moons" || cfg.dataset == "glyphs" || cfg.dataset == "idx",
          "dataset: expected two_moons|glyphs|idx, got '" + cfg.dataset + "'");
  require(cfg.normalize == "none" || cfg.normalize == "standardize" || cfg.normalize == "zca",
          "normalize: expected none|standardize|zca, got '" + cfg.normalize + "'");
  require(cfg.zca_epsilon > 0.0, "zca_epsilon: must be > 0");
  require(cfg.labels_per_class >= 1, "labels_per_class: must be >= 1");
  require(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction <= 0.5,
          "holdout_fraction: must lie in [0, 0.5]");
  if (cfg.dataset == "idx") {
    require(!cfg.train_images.empty() && !cfg.train_labels.empty(),
            "idx dataset: train_images and train_labels are required");
    require(!cfg.test_images.empty() || cfg.holdout_fraction > 0.0,
            "idx dataset: provide test_images/test_labels or a holdout_fraction");
    require(cfg.extra_unlabeled == 0, "extra_unlabeled: only synthetic datasets can grow one");
  }
  if (cfg.dataset == "two_moons") {
    require(cfg.n >= 2 && cfg.n % 2 == 0, "n: two_moons needs an even n >= 2");
    require(cfg.moons_sigma >= 0.0, "moons_sigma: must be >= 0");
  }

  require(cfg.model == "mlp" || cfg.model == "smallconv" || cfg.model == "convnet" ||
              cfg.model == "layers",
          "model: expected mlp|smallconv|convnet|layers, got '" + cfg.model + "'");
  if (cfg.model == "layers")
    require(!cfg.model_layers.empty(), "model_layers: required when model=layers");
  if (cfg.model != "mlp" && !cfg.is_image_dataset() && cfg.model != "layers")
    errors.push_back("model: conv presets need an image dataset");
  require(cfg.heads == 1 || cfg.heads == 2, "heads: must be 1 or 2");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout: must lie in [0,1)");
  require(cfg.mlp_dropout >= 0.0 && cfg.mlp_dropout < 1.0, "mlp_dropout: must lie in [0,1)");
  require(cfg.input_sigma >= 0.0, "input_sigma: must be >= 0");
  require(cfg.conv_width >= 1, "conv_width: must be >= 1");

  bool algorithm_ok = true;
  try {
    (void)train::algorithm_from_name(cfg.algorithm);
  } catch (const Error& e) {
    algorithm_ok = false;
    errors.push_back(e.what());
  }
  require(cfg.consistency == "mse" || cfg.consistency == "kl" || cfg.consistency == "c_tau",
          "consistency: expected mse|kl|c_tau, got '" + cfg.consistency + "'");
  if (cfg.consistency == "c_tau")
    require(cfg.consistency_tau > 0.0 && cfg.consistency_tau <= 1.0,
            "consistency_tau: must lie in (0,1]");
  require(cfg.consistency_weight >= 0.0, "consistency_weight: must be >= 0");
  require(cfg.coupling_weight >= 0.0, "coupling_weight: must be >= 0");
  require(cfg.te_decay > 0.0 && cfg.te_decay < 1.0, "te_decay: must lie in (0,1)");

  if (algorithm_ok && train::algorithm_from_name(cfg.algorithm) ==
                          train::Algorithm::TemporalEnsembling &&
      cfg.extra_unlabeled > 0)
    errors.push_back(
        "algorithm=temporal_ensembling cannot stream an extra unlabeled pool: its "
        "per-example targets are updated only once per epoch and need a stable example "
        "identity, which streamed rows do not have");

  require(cfg.lr > 0.0, "lr: must be > 0");
  require(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0, "adam_beta1: must lie in [0,1)");
  require(cfg.adam_beta2_before >= 0.0 && cfg.adam_beta2_before < 1.0 &&
              cfg.adam_beta2_after >= 0.0 && cfg.adam_beta2_after < 1.0,
          "adam_beta2: must lie in [0,1)");
  require(cfg.adam_eps > 0.0, "adam_eps: must be > 0");
  require(cfg.ema_decay_before >= 0.0 && cfg.ema_decay_before <= 1.0 &&
              cfg.ema_decay_after >= 0.0 && cfg.ema_decay_after <= 1.0,
          "ema_decay: must lie in [0,1]");
  require(cfg.beta1_floor >= 0.0 && cfg.beta1_floor <= cfg.adam_beta1,
          "beta1_floor: must lie in [0, adam_beta1]");
  require(cfg.bn_decay >= 0.0 && cfg.bn_decay < 1.0, "bn_decay: must lie in [0,1)");

  require(cfg.steps >= 1, "steps: must be >= 1");
  require(cfg.phase_switch <= cfg.steps,
          "phase_switch: must be <= steps (" + std::to_string(cfg.phase_switch) + " > " +
              std::to_string(cfg.steps) + ")");
  require(cfg.rampdown_window <= cfg.steps, "rampdown_window: must be <= steps");

  require(cfg.sampling == "quota" || cfg.sampling == "mixed",
          "sampling: expected quota|mixed, got '" + cfg.sampling + "'");
  if (cfg.sampling == "quota")
    require(cfg.batch_labeled + cfg.batch_unlabeled > 0,
            "batch quotas: batch_labeled and batch_unlabeled must not both be zero");
  else
    require(cfg.batch_size >= 1, "batch_size: must be >= 1 in mixed mode");

  require(cfg.precision == "f32" || cfg.precision == "f64",
          "precision: expected f32|f64, got '" + cfg.precision + "'");
  require(cfg.eval_every >= 1, "eval_every: must be >= 1");
  require(cfg.eval_target == "teacher" || cfg.eval_target == "student",
          "eval_target: expected teacher|student, got '" + cfg.eval_target + "'");

  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

namespace {

ExperimentConfig build_config(const std::vector<std::pair<std::string, std::string>>& entries) {
  // the preset bundle applies first; explicit keys then override it
  ExperimentConfig cfg;
  std::vector<std::string> errors;
  std::string preset;
  for (const auto& [k, v] : entries)
    if (k == "preset") preset = v;
  cfg.preset = preset;
  apply_preset(cfg, preset, errors);

  for (const auto& [k, v] : entries) {
    if (k == "preset") continue;
    try {
      set_config_key(cfg, k, v);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  finalize_config(cfg);
  validate_config(cfg);
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(
    const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                       line + "'");
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  for (const auto& kv : overrides) entries.push_back(kv);
  return build_config(entries);
}

ExperimentConfig make_config(
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  return build_config(overrides);
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "# semisup experiment config (echoed, fully resolved)\n";
  for (const auto& k : key_table()) out << k.name << " = " << k.get(cfg) << "\n";
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  // trajectory hash: keys that cannot change the training trajectory stay out
  // so checkpoints remain resumable when only reporting knobs moved
  static const std::vector<std::string> skipped = {"run_dir", "eval_target", "eval_every",
                                                   "checkpoint_every"};
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& k : key_table()) {
    if (std::find(skipped.begin(), skipped.end(), k.name) != skipped.end()) continue;
    mix(k.name);
    mix("=");
    mix(k.get(cfg));
    mix("\n");
  }
  return h;
}

}  // namespace semisup::harness
