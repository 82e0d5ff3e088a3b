#include "semisup/harness/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "semisup/data/glyphs.hpp"
#include "semisup/data/idx_io.hpp"
#include "semisup/data/normalize.hpp"
#include "semisup/data/two_moons.hpp"
#include "semisup/train/checkpoint.hpp"
#include "semisup/train/trainer.hpp"

namespace semisup::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct DataBundle {
  data::Dataset train;               // normalized, labels intact
  data::Dataset eval_set;            // test set or holdout, normalized
  data::Dataset train_labeled_view;  // labeled subset, for training metrics
  data::SemiSupervisedSplit split;
  data::TransformRecord transform;
};

data::Dataset subset(const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  data::Dataset out;
  out.examples = data::gather_rows<double>(ds.examples, rows);
  out.class_count = ds.class_count;
  if (ds.labeled()) {
    out.labels.reserve(rows.size());
    for (auto r : rows) out.labels.push_back(ds.labels[r]);
  }
  return out;
}

DataBundle build_data(const ExperimentConfig& cfg) {
  RandomSource root(cfg.seed);
  data::Dataset train, test, extra;

  if (cfg.dataset == "two_moons") {
    train = data::make_two_moons(cfg.n, cfg.moons_sigma, root.substream("data.train").root_key());
    test = data::make_two_moons(cfg.test_n, cfg.moons_sigma, root.substream("data.test").root_key());
    if (cfg.extra_unlabeled > 0) {
      std::uint64_t count = cfg.extra_unlabeled + (cfg.extra_unlabeled % 2);
      extra = data::make_two_moons(count, cfg.moons_sigma, root.substream("data.extra").root_key());
      extra.labels.clear();
    }
  } else if (cfg.dataset == "glyphs") {
    data::GlyphConfig g;
    g.image_size = cfg.image_size;
    g.noise_sigma = cfg.glyph_noise;
    g.translate_max = static_cast<int>(cfg.glyph_translate);
    g.min_intensity = cfg.glyph_min_intensity;
    g.pixel_dropout = cfg.glyph_pixel_dropout;
    g.count = cfg.n;
    train = data::make_glyph_digits(g, root.substream("data.train").root_key());
    g.count = cfg.test_n;
    test = data::make_glyph_digits(g, root.substream("data.test").root_key());
    if (cfg.extra_unlabeled > 0) {
      g.count = cfg.extra_unlabeled;
      extra = data::make_glyph_digits(g, root.substream("data.extra").root_key());
      extra.labels.clear();
    }
  } else {  // idx
    train = data::load_idx(cfg.train_images, cfg.train_labels);
    if (!cfg.test_images.empty())
      test = data::load_idx(cfg.test_images, cfg.test_labels.empty()
                                                ? std::optional<std::string>()
                                                : std::optional<std::string>(cfg.test_labels));
  }

  // holdout: a labeled validation slice carved from the training data before
  // label removal; when present it becomes the evaluation set
  if (cfg.holdout_fraction > 0.0) {
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto stream = root.substream("holdout");
    stream.shuffle(idx);
    const auto held = static_cast<std::size_t>(cfg.holdout_fraction *
                                               static_cast<double>(train.size()));
    std::vector<std::size_t> held_rows(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
    std::vector<std::size_t> kept_rows(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
    std::sort(held_rows.begin(), held_rows.end());
    std::sort(kept_rows.begin(), kept_rows.end());
    test = subset(train, held_rows);
    train = subset(train, kept_rows);
  }
  if (!test.labeled() || test.size() == 0)
    throw ConfigError("experiment: no labeled evaluation set (test files or holdout_fraction)");

  DataBundle bundle;
  if (cfg.normalize == "standardize") {
    auto res = data::standardize(train);
    bundle.transform = res.record;
    bundle.train = std::move(res.data);
  } else if (cfg.normalize == "zca") {
    auto res = data::zca_whiten(train, cfg.zca_epsilon);
    bundle.transform = res.record;
    bundle.train = std::move(res.data);
  } else {
    bundle.train = std::move(train);
  }
  bundle.eval_set = data::apply_transform(bundle.transform, test);

  if (cfg.flatten) {
    auto flat = [](data::Dataset& ds) {
      if (ds.size() == 0 || ds.feature_shape().rank() == 1) return;
      ds.examples = ds.examples.reshaped(Shape{ds.size(), ds.feature_size()});
    };
    flat(bundle.train);
    flat(bundle.eval_set);
  }

  bundle.split = data::remove_labels(bundle.train, cfg.labels_per_class, root.substream("labels"));
  if (extra.size() > 0) {
    bundle.split.extra = data::apply_transform(bundle.transform, extra);
    if (cfg.flatten && bundle.split.extra.feature_shape().rank() > 1)
      bundle.split.extra.examples = bundle.split.extra.examples.reshaped(
          Shape{bundle.split.extra.size(), bundle.split.extra.feature_size()});
  }

  bundle.train_labeled_view = subset(bundle.train, bundle.split.labeled);
  return bundle;
}

nn::LayerSpec weighted_flags(nn::LayerSpec l, const ExperimentConfig& cfg) {
  l.weight_norm = cfg.weight_norm;
  l.mean_only_bn = cfg.mean_only_bn;
  return l;
}

nn::ModelSpec build_model(const ExperimentConfig& cfg, const data::Dataset& train) {
  nn::ModelSpec spec;
  spec.input_shape = train.feature_shape();
  spec.head_count = static_cast<int>(cfg.heads);
  spec.lrelu_slope = cfg.lrelu_slope;
  spec.augment.translate_max =
      spec.input_shape.rank() == 3 ? static_cast<int>(cfg.translate_max) : 0;
  spec.augment.flip = cfg.flip;
  spec.augment.reflect_border = cfg.reflect_border;

  auto gnoise = [&]() {
    nn::LayerSpec l;
    l.kind = nn::LayerKind::GaussianNoise;
    l.sigma = cfg.input_sigma;
    return l;
  };
  auto head = [&]() {
    nn::LayerSpec l;
    l.kind = nn::LayerKind::SoftmaxHead;
    l.units = train.class_count;
    return weighted_flags(l, cfg);
  };
  auto conv = [&](std::size_t filters, std::size_t kernel, Padding pad) {
    nn::LayerSpec l;
    l.kind = nn::LayerKind::Conv;
    l.filters = filters;
    l.kernel = kernel;
    l.padding = pad;
    return weighted_flags(l, cfg);
  };
  auto dropout = [&](double p) {
    nn::LayerSpec l;
    l.kind = nn::LayerKind::Dropout;
    l.rate = p;
    return l;
  };

  if (cfg.model == "mlp") {
    spec.layers.push_back(gnoise());
    if (spec.input_shape.rank() == 3) spec.layers.push_back({.kind = nn::LayerKind::Flatten});
    std::stringstream ss(cfg.hidden);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      nn::LayerSpec l;
      l.kind = nn::LayerKind::Dense;
      try {
        l.units = std::stoul(tok);
      } catch (...) {
        throw ConfigError("hidden: bad layer width '" + tok + "'");
      }
      spec.layers.push_back(weighted_flags(l, cfg));
      if (cfg.mlp_dropout > 0.0) spec.layers.push_back(dropout(cfg.mlp_dropout));
    }
    spec.layers.push_back(head());
  } else if (cfg.model == "smallconv") {
    const std::size_t w = cfg.conv_width;
    spec.layers.push_back(gnoise());
    spec.layers.push_back(conv(w, 3, Padding::Same));
    spec.layers.push_back(conv(w, 3, Padding::Same));
    spec.layers.push_back({.kind = nn::LayerKind::MaxPool});
    spec.layers.push_back(dropout(cfg.dropout));
    spec.layers.push_back(conv(2 * w, 3, Padding::Same));
    spec.layers.push_back({.kind = nn::LayerKind::MaxPool});
    spec.layers.push_back(dropout(cfg.dropout));
    spec.layers.push_back(conv(4 * w, 3, Padding::Valid));
    spec.layers.push_back({.kind = nn::LayerKind::AvgPool});
    spec.layers.push_back(head());
  } else if (cfg.model == "convnet") {
    auto canon = nn::canonical_convnet_spec(spec.input_shape, cfg.flip);
    spec.layers = canon.layers;
    for (auto& l : spec.layers) {
      if (l.weighted()) l = weighted_flags(l, cfg);
      if (l.kind == nn::LayerKind::GaussianNoise) l.sigma = cfg.input_sigma;
      if (l.kind == nn::LayerKind::Dropout) l.rate = cfg.dropout;
    }
  } else {  // layers
    spec.layers = nn::layers_from_string(cfg.model_layers);
  }
  nn::validate_model(spec);
  if (spec.class_count() != train.class_count)
    throw ConfigError("model: head classes " + std::to_string(spec.class_count()) +
                      " != dataset classes " + std::to_string(train.class_count));
  return spec;
}

train::TrainConfig build_train_config(const ExperimentConfig& cfg, const DataBundle& data,
                                      const nn::ModelSpec& spec) {
  train::TrainConfig t;
  t.algorithm = train::algorithm_from_name(cfg.algorithm);

  if (cfg.consistency == "mse") t.consistency.kind = objectives::ConsistencyKind::Mse;
  else if (cfg.consistency == "kl") t.consistency.kind = objectives::ConsistencyKind::Kl;
  else t.consistency.kind = objectives::ConsistencyKind::CTau;
  t.consistency.tau = cfg.consistency_tau;
  t.consistency.max_weight = cfg.consistency_weight;
  t.consistency.rampup_steps = cfg.consistency_rampup;
  t.coupling_weight = cfg.heads == 2 ? cfg.coupling_weight : 0.0;

  if (cfg.sampling == "quota") {
    t.class_weight = static_cast<double>(cfg.batch_labeled);
  } else {
    const double pool = static_cast<double>(data.split.primary.size() + data.split.extra.size());
    t.class_weight = static_cast<double>(cfg.batch_size) *
                     static_cast<double>(data.split.labeled.size()) / pool;
  }

  t.lr = cfg.lr;
  t.beta1 = cfg.adam_beta1;
  t.adam_eps = cfg.adam_eps;
  t.beta2_before = cfg.adam_beta2_before;
  t.beta2_after = cfg.adam_beta2_after;
  t.ema_before = cfg.ema_decay_before;
  t.ema_after = cfg.ema_decay_after;
  t.phase_switch_step = cfg.phase_switch;
  t.lr_rampup_steps = cfg.rampup;
  t.rampdown = cfg.rampdown;
  t.rampdown_start = cfg.steps > cfg.rampdown_window ? cfg.steps - cfg.rampdown_window : 0;
  t.total_steps = cfg.steps;
  t.beta1_rampdown_floor = cfg.beta1_floor;
  t.cosine_horizon = cfg.cosine_horizon;

  t.student_noise.augment = cfg.student_augment;
  t.student_noise.input_noise = cfg.student_input_noise;
  t.student_noise.dropout = cfg.student_dropout;
  t.teacher_noise.augment = cfg.teacher_augment;
  t.teacher_noise.input_noise = cfg.teacher_input_noise;
  t.teacher_noise.dropout = cfg.teacher_dropout;

  t.augment.translate_max = spec.augment.translate_max;
  t.augment.flip = spec.augment.flip;
  t.augment.reflect_border = spec.augment.reflect_border;
  t.pi_share_augment = cfg.pi_share_augment;
  t.te_decay = cfg.te_decay;
  t.bn_decay = cfg.bn_decay;
  return t;
}

constexpr const char* kMetricsHeader =
    "step,class_cost,class_weight,cons_raw,cons_weight,coupling,coupling_weight,total,"
    "student_train_err,teacher_train_err,student_test_err,teacher_test_err,lr,ema_decay";

template <typename T>
RunResult run_impl(const ExperimentConfig& cfg, const std::string* resume_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string run_dir = cfg.run_dir.empty() ? default_run_dir(cfg) : cfg.run_dir;
  fs::create_directories(run_dir);
  {
    std::ofstream out(run_dir + "/config.txt");
    out << echo_config(cfg);
  }

  DataBundle data = build_data(cfg);
  const nn::ModelSpec spec = build_model(cfg, data.train);
  const train::TrainConfig tcfg = build_train_config(cfg, data, spec);

  RandomSource root(cfg.seed);
  const RandomSource train_rng = root.substream("train");

  // data-dependent init on a leading slice of the normalized training set
  const std::size_t calib_n =
      std::min<std::size_t>(data.train.size(), spec.input_shape.rank() == 3 ? 8 : 64);
  std::vector<std::size_t> calib_rows(calib_n);
  for (std::size_t i = 0; i < calib_n; ++i) calib_rows[i] = i;
  const auto calib = data::gather_rows<T>(data.train.examples, calib_rows);
  auto init = nn::init_weights<T>(spec, root.substream("init"), &calib);

  auto state = train::make_trainer(spec, tcfg.algorithm, std::move(init), data.train.size(),
                                   cfg.te_decay);
  data::SamplerState sampler(data.split, root.substream("sampler"), cfg.sampler_reuse);

  if (resume_path) {
    train::SamplerCursors cursors;
    train::load_checkpoint(*resume_path, state, config_hash(cfg), cursors);
    sampler.labeled_stream().restore(cursors.labeled_pass, cursors.labeled_cursor);
    sampler.unlabeled_stream().restore(cursors.unlabeled_pass, cursors.unlabeled_cursor);
    sampler.mixed_stream().restore(cursors.mixed_pass, cursors.mixed_cursor);
    if (state.step >= cfg.steps)
      throw ConfigError("resume: checkpoint already at step " + std::to_string(state.step));
  }

  auto cursors_now = [&]() {
    train::SamplerCursors c;
    c.labeled_pass = sampler.labeled_stream().pass();
    c.labeled_cursor = sampler.labeled_stream().cursor();
    c.unlabeled_pass = sampler.unlabeled_stream().pass();
    c.unlabeled_cursor = sampler.unlabeled_stream().cursor();
    c.mixed_pass = sampler.mixed_stream().pass();
    c.mixed_cursor = sampler.mixed_stream().cursor();
    return c;
  };

  std::string csv = std::string("# semisup-metrics-v1\n") + kMetricsHeader + "\n";
  RunResult result;
  result.run_dir = run_dir;

  objectives::CostBreakdown cb;
  while (state.step < cfg.steps) {
    data::Batch<T> batch = cfg.sampling == "quota"
                               ? sampler.sample<T>(cfg.batch_labeled, cfg.batch_unlabeled)
                               : sampler.sample_mixed<T>(cfg.batch_size);
    try {
      cb = train::train_step(state, batch, tcfg, train_rng);
    } catch (const NumericError& e) {
      // the step left the state untouched; keep it as the last good one
      train::save_checkpoint(run_dir + "/checkpoint_lastgood.ckpt", state, config_hash(cfg),
                             cursors_now());
      std::ofstream out(run_dir + "/summary.txt");
      out << "aborted = true\nstep = " << state.step << "\nreason = " << e.what() << "\n";
      throw NumericError("run aborted at step " + std::to_string(state.step) + ": " + e.what() +
                         " (last good checkpoint retained in " + run_dir + ")");
    }

    const bool tick = state.step % cfg.eval_every == 0 || state.step == cfg.steps;
    if (tick) {
      const auto sched = train::resolve_schedules(tcfg, state.step - 1);
      const auto s_train = train::evaluate(spec, state.student, data.train_labeled_view);
      const auto t_train = train::evaluate(spec, state.ema.teacher, data.train_labeled_view);
      const auto s_test = train::evaluate(spec, state.student, data.eval_set);
      const auto t_test = train::evaluate(spec, state.ema.teacher, data.eval_set);
      csv += std::to_string(state.step) + "," + fmt(cb.classification) + "," +
             fmt(cb.class_weight) + "," + fmt(cb.consistency_raw) + "," +
             fmt(cb.consistency_weight) + "," + fmt(cb.coupling) + "," +
             fmt(cb.coupling_weight) + "," + fmt(cb.total) + "," + fmt(s_train.error_rate) +
             "," + fmt(t_train.error_rate) + "," + fmt(s_test.error_rate) + "," +
             fmt(t_test.error_rate) + "," + fmt(sched.lr) + "," + fmt(sched.ema_decay) + "\n";
      result.student_train_err = s_train.error_rate;
      result.teacher_train_err = t_train.error_rate;
      result.student_test_err = s_test.error_rate;
      result.teacher_test_err = t_test.error_rate;
    }
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)
      train::save_checkpoint(run_dir + "/checkpoint_step" + std::to_string(state.step) + ".ckpt",
                             state, config_hash(cfg), cursors_now());
  }

  train::save_checkpoint(run_dir + "/checkpoint_final.ckpt", state, config_hash(cfg),
                         cursors_now());
  {
    std::ofstream out(run_dir + "/metrics.csv", std::ios::binary);
    out << csv;
  }

  result.steps = state.step;
  result.final_total_cost = cb.total;
  result.headline_err =
      cfg.eval_target == "teacher" ? result.teacher_test_err : result.student_test_err;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    std::ofstream out(run_dir + "/summary.txt");
    out << "algorithm = " << cfg.algorithm << "\nsteps = " << result.steps
        << "\neval_target = " << cfg.eval_target
        << "\nheadline_test_error = " << fmt(result.headline_err)
        << "\nstudent_test_error = " << fmt(result.student_test_err)
        << "\nteacher_test_error = " << fmt(result.teacher_test_err)
        << "\nstudent_train_error = " << fmt(result.student_train_err)
        << "\nteacher_train_error = " << fmt(result.teacher_train_err)
        << "\nfinal_total_cost = " << fmt(result.final_total_cost)
        << "\nwall_seconds = " << fmt(result.wall_seconds) << "\n";
  }
  return result;
}

}  // namespace

std::string default_run_dir(const ExperimentConfig& cfg) {
  const char* root = std::getenv("SEMISUP_RUN_ROOT");
  const std::string base = root ? root : "runs";
  return base + "/" + cfg.dataset + "_" + cfg.algorithm + "_seed" + std::to_string(cfg.seed);
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  return cfg.precision == "f64" ? run_impl<double>(cfg, nullptr) : run_impl<float>(cfg, nullptr);
}

RunResult resume_experiment(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  return cfg.precision == "f64" ? run_impl<double>(cfg, &checkpoint_path)
                                : run_impl<float>(cfg, &checkpoint_path);
}

namespace {

template <typename T>
EvalReport eval_impl(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  DataBundle data = build_data(cfg);
  const nn::ModelSpec spec = build_model(cfg, data.train);
  RandomSource root(cfg.seed);
  auto init = nn::init_weights<T>(spec, root.substream("init"));
  auto state = train::make_trainer(spec, train::algorithm_from_name(cfg.algorithm),
                                   std::move(init), data.train.size(), cfg.te_decay);
  train::SamplerCursors cursors;
  train::load_checkpoint(checkpoint_path, state, 0, cursors);  // 0: skip the config-hash check
  EvalReport rep;
  const auto s = train::evaluate(spec, state.student, data.eval_set);
  const auto t = train::evaluate(spec, state.ema.teacher, data.eval_set);
  rep.student_err = s.error_rate;
  rep.student_cost = s.mean_cost;
  rep.teacher_err = t.error_rate;
  rep.teacher_cost = t.mean_cost;
  return rep;
}

}  // namespace

EvalReport eval_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  return cfg.precision == "f64" ? eval_impl<double>(cfg, checkpoint_path)
                                : eval_impl<float>(cfg, checkpoint_path);
}

void export_dataset(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  RandomSource root(cfg.seed);
  if (cfg.dataset == "glyphs") {
    data::GlyphConfig g;
    g.image_size = cfg.image_size;
    g.noise_sigma = cfg.glyph_noise;
    g.translate_max = static_cast<int>(cfg.glyph_translate);
    g.min_intensity = cfg.glyph_min_intensity;
    g.pixel_dropout = cfg.glyph_pixel_dropout;
    g.count = cfg.n;
    auto train = data::make_glyph_digits(g, root.substream("data.train").root_key());
    g.count = cfg.test_n;
    auto test = data::make_glyph_digits(g, root.substream("data.test").root_key());
    data::save_idx(train, out_dir + "/train-images.idx3-ubyte", out_dir + "/train-labels.idx1-ubyte");
    data::save_idx(test, out_dir + "/test-images.idx3-ubyte", out_dir + "/test-labels.idx1-ubyte");
  } else if (cfg.dataset == "two_moons") {
    auto write_csv = [](const data::Dataset& ds, const std::string& path) {
      std::ofstream out(path);
      out << "x,y,label\n";
      for (std::size_t i = 0; i < ds.size(); ++i) {
        char buf[80];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", ds.examples[i * 2],
                      ds.examples[i * 2 + 1], ds.labels[i]);
        out << buf;
      }
    };
    auto train = data::make_two_moons(cfg.n, cfg.moons_sigma, root.substream("data.train").root_key());
    auto test =
        data::make_two_moons(cfg.test_n, cfg.moons_sigma, root.substream("data.test").root_key());
    write_csv(train, out_dir + "/train.csv");
    write_csv(test, out_dir + "/test.csv");
  } else {
    throw ConfigError("export-data: dataset must be glyphs or two_moons");
  }
}

}  // namespace semisup::harness
