#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "semisup/data/two_moons.hpp"
#include "semisup/train/checkpoint.hpp"
#include "semisup/train/trainer.hpp"

using namespace semisup;
using namespace semisup::train;

namespace {

// head-only linear model: one weight matrix [in, classes], nothing else
nn::ModelSpec linear_model(std::size_t in_dim, std::size_t classes) {
  nn::ModelSpec spec;
  spec.input_shape = Shape{in_dim};
  nn::LayerSpec head;
  head.kind = nn::LayerKind::SoftmaxHead;
  head.units = classes;
  head.weight_norm = false;
  head.mean_only_bn = false;
  head.bias = false;
  spec.layers.push_back(head);
  nn::validate_model(spec);
  return spec;
}

template <typename T>
nn::WeightSet<T> manual_weights(const nn::ModelSpec& spec, const std::string& name,
                                Tensor<T> w) {
  nn::WeightSet<T> ws;
  ws.fingerprint = nn::model_fingerprint(spec);
  ws.trainable.emplace(name, std::move(w));
  return ws;
}

nn::ModelSpec small_mlp(int heads = 1) {
  nn::ModelSpec spec;
  spec.input_shape = Shape{2};
  spec.head_count = heads;
  nn::LayerSpec noise;
  noise.kind = nn::LayerKind::GaussianNoise;
  noise.sigma = 0.15;
  spec.layers.push_back(noise);
  nn::LayerSpec d1;
  d1.kind = nn::LayerKind::Dense;
  d1.units = 12;
  spec.layers.push_back(d1);
  nn::LayerSpec head;
  head.kind = nn::LayerKind::SoftmaxHead;
  head.units = 2;
  spec.layers.push_back(head);
  nn::validate_model(spec);
  return spec;
}

TrainConfig quiet_config(Algorithm alg, double cons_weight) {
  TrainConfig cfg;
  cfg.algorithm = alg;
  cfg.consistency.kind = objectives::ConsistencyKind::Mse;
  cfg.consistency.max_weight = cons_weight;
  cfg.consistency.rampup_steps = 0;
  cfg.lr_rampup_steps = 0;
  cfg.phase_switch_step = 0;
  cfg.beta2_before = cfg.beta2_after = 0.999;
  cfg.ema_before = cfg.ema_after = 0.95;
  cfg.class_weight = 1.0;
  cfg.student_noise.augment = false;
  cfg.teacher_noise.augment = false;
  return cfg;
}

void disable_noise(TrainConfig& cfg) {
  cfg.student_noise.input_noise = false;
  cfg.student_noise.dropout = false;
  cfg.teacher_noise.input_noise = false;
  cfg.teacher_noise.dropout = false;
}

template <typename T>
data::Batch<T> toy_batch() {
  data::Batch<T> b;
  b.inputs = Tensor<T>::from_vec(Shape{2, 1}, {T(0.7), T(-0.4)});
  b.labels = {1, -1};
  b.labeled_mask = {1, 0};
  b.example_ids = {0, 1};
  return b;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves weights and moments unchanged") {
  auto spec = linear_model(3, 2);
  auto ws = manual_weights(spec, "head0.w",
                           Tensor<double>::from_vec(Shape{3, 2}, {1, 2, 3, 4, 5, 6}));
  auto opt = OptimizerState<double>::zeros_like(ws);
  std::map<std::string, Tensor<double>> grads;
  grads.emplace("head0.w", Tensor<double>::zeros(Shape{3, 2}));
  auto before = ws.trainable.at("head0.w");
  adam_step(opt, ws, grads, AdamParams{0.003, 0.9, 0.999, 1e-8});
  CHECK(ws.trainable.at("head0.w").same_values(before));
  CHECK(opt.m.at("head0.w").same_values(Tensor<double>::zeros(Shape{3, 2})));
  CHECK(opt.v.at("head0.w").same_values(Tensor<double>::zeros(Shape{3, 2})));
  CHECK(opt.step == 1);
}

TEST_CASE("adam: first-step magnitude and two-step scalar oracle") {
  auto spec = linear_model(1, 2);
  auto ws = manual_weights(spec, "head0.w", Tensor<double>::from_vec(Shape{1, 2}, {0.5, 0.5}));
  auto opt = OptimizerState<double>::zeros_like(ws);
  std::map<std::string, Tensor<double>> grads;
  grads.emplace("head0.w", Tensor<double>::from_vec(Shape{1, 2}, {1.0, 1.0}));

  adam_step(opt, ws, grads, AdamParams{0.003, 0.9, 0.999, 1e-8});
  // bias-corrected ratio is 1 up to epsilon effects: delta ~ -lr
  CHECK(std::abs(ws.trainable.at("head0.w")[0] - (0.5 - 0.003)) <= 1e-8);

  // second step with the same gradient, against an independent scalar rerun
  adam_step(opt, ws, grads, AdamParams{0.003, 0.9, 0.999, 1e-8});
  double w = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 1.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    w -= 0.003 * mhat / (std::sqrt(vhat) + 1e-8);
  }
  CHECK(std::abs(ws.trainable.at("head0.w")[0] - w) <= 1e-12);
}

TEST_CASE("adam: missing and extra gradient keys are rejected") {
  auto spec = linear_model(1, 2);
  auto ws = manual_weights(spec, "head0.w", Tensor<double>::from_vec(Shape{1, 2}, {0.5, 0.5}));
  auto opt = OptimizerState<double>::zeros_like(ws);
  std::map<std::string, Tensor<double>> none;
  CHECK_THROWS_AS(adam_step(opt, ws, none, AdamParams{0.003, 0.9, 0.999, 1e-8}), ValueError);
  std::map<std::string, Tensor<double>> wrong;
  wrong.emplace("other", Tensor<double>::zeros(Shape{1, 2}));
  CHECK_THROWS_AS(adam_step(opt, ws, wrong, AdamParams{0.003, 0.9, 0.999, 1e-8}), ValueError);
}

TEST_CASE("ema: alpha endpoints are bitwise, closed form holds") {
  auto spec = linear_model(2, 2);
  auto student = manual_weights(spec, "head0.w",
                                Tensor<double>::from_vec(Shape{2, 2}, {0.7, 0.7, 0.7, 0.7}));
  EMAState<double> ema;
  ema.teacher = manual_weights(spec, "head0.w", Tensor<double>::zeros(Shape{2, 2}));

  auto saved = ema.teacher;
  ema_update(ema, student, 1.0);
  CHECK(nn::bitwise_equal(ema.teacher, saved));  // alpha = 1 leaves teacher alone

  ema_update(ema, student, 0.0);
  CHECK(nn::bitwise_equal(ema.teacher, student));  // alpha = 0 copies the student

  // theta'_0 = 0, constant student c: theta'_t = c (1 - alpha^t)
  for (double alpha : {0.9, 0.99, 0.999}) {
    EMAState<double> e;
    e.teacher = manual_weights(spec, "head0.w", Tensor<double>::zeros(Shape{2, 2}));
    for (int t = 1; t <= 1000; ++t) {
      ema_update(e, student, alpha);
      const double expect = 0.7 * (1.0 - std::pow(alpha, t));
      CHECK(std::abs(e.teacher.trainable.at("head0.w")[0] - expect) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(ema_update(ema, student, 1.5), ValueError);
}

TEST_CASE("ema commutes with scalar rescaling of both sides") {
  auto spec = linear_model(2, 3);
  RandomSource rng(3);
  auto mk = [&](double scale) {
    std::vector<double> v(6);
    for (auto& x : v) x = scale * rng.gaussian(1.0);
    return manual_weights(spec, "head0.w", Tensor<double>::from_vec(Shape{2, 3}, std::move(v)));
  };
  auto a = mk(1.0), b = mk(1.0);
  const double c = 2.75;
  auto scale_ws = [&](const nn::WeightSet<double>& w) {
    return nn::combine_weights(w, w, [&](double x, double) { return c * x; });
  };
  EMAState<double> e1{a}, e2{scale_ws(a)};
  ema_update(e1, b, 0.97);
  ema_update(e2, scale_ws(b), 0.97);
  auto scaled_first = scale_ws(e1.teacher);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::abs(scaled_first.trainable.at("head0.w")[i] -
                   e2.teacher.trainable.at("head0.w")[i]) <= 1e-12);
}

TEST_CASE("temporal store: first update, skip semantics, brute-force oracle") {
  TemporalEnsembleStore<double> store(5, 3, 0.6);
  CHECK(!store.has_target(2));
  CHECK_THROWS_AS(store.target(2), ValueError);
  CHECK_THROWS_AS(store.target(99), ValueError);

  const double z1[3] = {0.2, 0.5, 0.3};
  store.update(2, z1);
  auto t = store.target(2);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(t[std::size_t(c)] - z1[c]) <= 1e-12);

  // k updates vs recomputation from the logged history
  RandomSource rng(8);
  std::vector<std::vector<double>> history;
  for (int k = 0; k < 12; ++k) {
    std::vector<double> z(3);
    double sum = 0;
    for (auto& v : z) {
      v = rng.uniform01_open();
      sum += v;
    }
    for (auto& v : z) v /= sum;
    history.push_back(z);
    store.update(4, z.data());
  }
  std::vector<double> zacc(3, 0.0);
  for (const auto& z : history)
    for (int c = 0; c < 3; ++c) zacc[std::size_t(c)] = 0.6 * zacc[std::size_t(c)] + 0.4 * z[std::size_t(c)];
  const double corr = 1.0 / (1.0 - std::pow(0.6, 12));
  auto got = store.target(4);
  double tsum = 0;
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(got[std::size_t(c)] - zacc[std::size_t(c)] * corr) <= 1e-12);
    tsum += got[std::size_t(c)];
  }
  CHECK(std::abs(tsum - 1.0) <= 1e-6);  // bias-corrected target stays on the simplex
}

TEST_CASE("mean teacher with alpha=0 and weight 0: teacher equals student bitwise") {
  auto spec = small_mlp();
  RandomSource rng(5);
  auto init = nn::init_weights<double>(spec, rng);
  auto state = make_trainer(spec, Algorithm::MeanTeacher, init, 0, 0.6);
  auto cfg = quiet_config(Algorithm::MeanTeacher, 0.0);
  cfg.ema_before = cfg.ema_after = 0.0;
  auto batch = toy_batch<double>();
  batch.inputs = Tensor<double>::from_vec(Shape{2, 2}, {0.7, -0.3, -0.4, 0.9});
  for (int s = 0; s < 3; ++s) {
    train_step(state, batch, cfg, rng);
    CHECK(nn::bitwise_equal(state.ema.teacher, state.student));
  }
}

TEST_CASE("pi with all noise disabled: zero consistency, supervised-identical step") {
  auto spec = small_mlp();
  RandomSource rng(6);
  auto init = nn::init_weights<double>(spec, rng);
  auto batch = toy_batch<double>();
  batch.inputs = Tensor<double>::from_vec(Shape{2, 2}, {0.7, -0.3, -0.4, 0.9});

  auto pi_state = make_trainer(spec, Algorithm::Pi, init, 0, 0.6);
  auto pi_cfg = quiet_config(Algorithm::Pi, 1.0);
  disable_noise(pi_cfg);
  auto cb = train_step(pi_state, batch, pi_cfg, rng);
  CHECK(cb.consistency_raw == 0.0);

  auto sup_state = make_trainer(spec, Algorithm::Supervised, init, 0, 0.6);
  auto sup_cfg = quiet_config(Algorithm::Supervised, 0.0);
  disable_noise(sup_cfg);
  train_step(sup_state, batch, sup_cfg, rng);
  CHECK(nn::bitwise_equal(pi_state.student, sup_state.student));
}

TEST_CASE("one mean-teacher step on a 2-parameter linear model matches a hand oracle") {
  auto spec = linear_model(1, 2);
  auto state = make_trainer(spec, Algorithm::MeanTeacher,
                            manual_weights(spec, "head0.w",
                                           Tensor<double>::from_vec(Shape{1, 2}, {0.3, -0.2})),
                            0, 0.6);
  state.ema.teacher =
      manual_weights(spec, "head0.w", Tensor<double>::from_vec(Shape{1, 2}, {0.1, 0.4}));

  auto cfg = quiet_config(Algorithm::MeanTeacher, 0.3);
  disable_noise(cfg);
  cfg.ema_before = cfg.ema_after = 0.5;
  RandomSource rng(1);
  auto batch = toy_batch<double>();
  auto cb = train_step(state, batch, cfg, rng);

  // hand-executed oracle: forward, costs, gradient, Adam, EMA
  const double x[2] = {0.7, -0.4};
  const double w0[2] = {0.3, -0.2};
  const double wt[2] = {0.1, 0.4};
  auto softmax2 = [](double a, double b, double* out) {
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    out[0] = ea / (ea + eb);
    out[1] = eb / (ea + eb);
  };
  double p[2][2], q[2][2];
  for (int r = 0; r < 2; ++r) {
    softmax2(x[r] * w0[0], x[r] * w0[1], p[r]);
    softmax2(x[r] * wt[0], x[r] * wt[1], q[r]);
  }
  const double ce = -std::log(p[0][1]);  // row 0 labeled class 1
  double mse = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) mse += (q[r][c] - p[r][c]) * (q[r][c] - p[r][c]);
  mse /= 4.0;
  CHECK(std::abs(cb.classification - ce) <= 1e-12);
  CHECK(std::abs(cb.consistency_raw - mse) <= 1e-12);
  CHECK(std::abs(cb.total - (ce + 0.3 * mse)) <= 1e-12);

  // gradient wrt logits: classification (p - y) on the labeled row, plus the
  // consistency term chained through the student softmax
  double dlog[2][2] = {{0, 0}, {0, 0}};
  dlog[0][0] += p[0][0] - 0.0;
  dlog[0][1] += p[0][1] - 1.0;
  for (int r = 0; r < 2; ++r) {
    double gp[2];
    for (int c = 0; c < 2; ++c) gp[c] = 0.3 * 2.0 * (p[r][c] - q[r][c]) / 4.0;
    const double dot = gp[0] * p[r][0] + gp[1] * p[r][1];
    for (int c = 0; c < 2; ++c) dlog[r][c] += p[r][c] * (gp[c] - dot);
  }
  double gw[2];
  for (int c = 0; c < 2; ++c) gw[c] = x[0] * dlog[0][c] + x[1] * dlog[1][c];

  double w_new[2], m_acc, v_acc;
  for (int c = 0; c < 2; ++c) {
    m_acc = 0.1 * gw[c];
    v_acc = 0.001 * gw[c] * gw[c];
    const double mhat = m_acc / (1.0 - 0.9);
    const double vhat = v_acc / (1.0 - 0.999);
    w_new[c] = w0[c] - 0.003 * mhat / (std::sqrt(vhat) + 1e-8);
  }
  for (int c = 0; c < 2; ++c) {
    CHECK(std::abs(state.student.trainable.at("head0.w")[std::size_t(c)] - w_new[c]) <= 1e-10);
    const double teacher = 0.5 * wt[c] + 0.5 * w_new[c];
    CHECK(std::abs(state.ema.teacher.trainable.at("head0.w")[std::size_t(c)] - teacher) <= 1e-10);
  }
}

TEST_CASE("with consistency weight 0 all four algorithms walk the same trajectory") {
  auto spec = small_mlp();
  RandomSource rng(9);
  auto init = nn::init_weights<double>(spec, rng);
  auto ds = data::make_two_moons(40, 0.1, 4);
  auto split = data::remove_labels(ds, 5, rng);

  std::vector<nn::WeightSet<double>> finals;
  std::vector<double> class_costs;
  for (Algorithm alg : {Algorithm::Supervised, Algorithm::Pi, Algorithm::MeanTeacher,
                        Algorithm::TemporalEnsembling}) {
    auto state = make_trainer(spec, alg, init, ds.size(), 0.6);
    auto cfg = quiet_config(alg, 0.0);
    data::SamplerState sampler(split, RandomSource(77));
    for (int s = 0; s < 5; ++s) {
      auto batch = sampler.sample<double>(2, 6);
      auto cb = train_step(state, batch, cfg, RandomSource(31));
      if (alg == Algorithm::Supervised) class_costs.push_back(cb.classification);
    }
    finals.push_back(state.student);
  }
  for (std::size_t i = 1; i < finals.size(); ++i)
    CHECK(nn::bitwise_equal(finals[0], finals[i]));
  CHECK(class_costs.size() == 5);
}

TEST_CASE("identical config and seed give a bit-identical cost sequence") {
  auto spec = small_mlp();
  RandomSource rng(12);
  auto init = nn::init_weights<double>(spec, rng);
  auto ds = data::make_two_moons(40, 0.1, 4);
  auto split = data::remove_labels(ds, 5, rng);

  auto run = [&]() {
    auto state = make_trainer(spec, Algorithm::MeanTeacher, init, 0, 0.6);
    auto cfg = quiet_config(Algorithm::MeanTeacher, 2.0);
    data::SamplerState sampler(split, RandomSource(3));
    std::vector<double> totals;
    for (int s = 0; s < 6; ++s)
      totals.push_back(train_step(state, sampler.sample<double>(2, 6), cfg, RandomSource(55)).total);
    return totals;
  };
  auto a = run();
  auto b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("temporal ensembling: store updates once per pass, targets feed the cost") {
  auto spec = small_mlp();
  RandomSource rng(13);
  auto init = nn::init_weights<double>(spec, rng);
  auto ds = data::make_two_moons(24, 0.1, 5);
  auto split = data::remove_labels(ds, 4, rng);

  auto state = make_trainer(spec, Algorithm::TemporalEnsembling, init, ds.size(), 0.6);
  auto cfg = quiet_config(Algorithm::TemporalEnsembling, 1.0);
  data::SamplerState sampler(split, RandomSource(7));

  // 8 labeled + 16 unlabeled with quotas 2+4: both streams finish one pass
  // every 4 batches, so counts stay uniform across the whole set
  auto cb0 = train_step(state, sampler.sample<double>(2, 4), cfg, rng);
  CHECK(cb0.consistency_raw == 0.0);  // nothing stored yet: every row skipped
  for (int s = 0; s < 3; ++s) train_step(state, sampler.sample<double>(2, 4), cfg, rng);
  for (std::int64_t id = 0; id < 24; ++id) CHECK(state.te.update_count(id) == 1);

  // second pass: counts reach exactly 2, consistency now engages
  double cons = 0;
  for (int s = 0; s < 4; ++s)
    cons += train_step(state, sampler.sample<double>(2, 4), cfg, rng).consistency_raw;
  for (std::int64_t id = 0; id < 24; ++id) CHECK(state.te.update_count(id) == 2);
  CHECK(cons > 0.0);

  // extra-pool rows (id -1) are a configuration error for this algorithm
  auto bad = toy_batch<double>();
  bad.inputs = Tensor<double>::from_vec(Shape{2, 2}, {0.1, 0.2, 0.3, 0.4});
  bad.example_ids = {0, -1};
  CHECK_THROWS_AS(train_step(state, bad, cfg, rng), ConfigError);
}

TEST_CASE("stop-gradient contract: mean teacher vs pi branches") {
  auto spec = small_mlp();
  RandomSource rng(14);
  auto student = nn::init_weights<double>(spec, rng);
  auto teacher = nn::init_weights<double>(spec, RandomSource(1234));
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{6, 2});

  auto consistency_loss = [&](const nn::WeightSet<double>& tweights, bool teacher_trainable) {
    Tape<double> tape;
    nn::ForwardOptions sopts;
    sopts.side = "student";
    auto s = nn::forward(spec, student, x, nn::NoiseConfig{}, rng, tape, sopts);
    nn::ForwardOptions topts;
    topts.side = "teacher";
    topts.trainable = teacher_trainable;
    auto t = nn::forward(spec, tweights, x, nn::NoiseConfig{}, rng, tape, topts);
    const int loss = objectives::consistency_mse(tape, t.probs[0], s.probs[0]);
    auto grads = tape.backward(loss);
    double teacher_grad = 0;
    for (const auto& [leaf, name] : t.weight_leaves)
      if (grads.count(leaf))
        for (std::size_t i = 0; i < grads.at(leaf).size(); ++i)
          teacher_grad += std::abs(grads.at(leaf)[i]);
    return std::pair<double, double>(tape.value(loss).item(), teacher_grad);
  };

  // mean teacher: teacher is constant; perturbing it moves the loss but its
  // gradient stays absent
  auto [loss_a, tgrad_a] = consistency_loss(teacher, false);
  CHECK(tgrad_a == 0.0);
  auto perturbed = nn::combine_weights(teacher, teacher,
                                       [](double v, double) { return v + 0.05; });
  auto [loss_b, tgrad_b] = consistency_loss(perturbed, false);
  CHECK(tgrad_b == 0.0);
  CHECK(loss_a != loss_b);

  // pi: the target branch carries gradients too
  auto [loss_c, tgrad_c] = consistency_loss(student, true);
  CHECK(tgrad_c > 0.0);
  (void)loss_c;
}

TEST_CASE("evaluate: uniform predictor, perfect memorizer, errors") {
  // zero weights -> zero logits -> uniform probabilities -> argmax picks class
  // 0 everywhere -> error is exactly 0.9 on balanced 10-class data
  auto spec = linear_model(4, 10);
  auto ws = manual_weights(spec, "head0.w", Tensor<double>::zeros(Shape{4, 10}));
  data::Dataset ds;
  {
    RandomSource rng(2);
    std::vector<double> x(100 * 4);
    std::vector<int> labels(100);
    for (std::size_t i = 0; i < 100; ++i) {
      labels[i] = static_cast<int>(i % 10);
      for (int j = 0; j < 4; ++j) x[i * 4 + std::size_t(j)] = rng.gaussian(1.0);
    }
    ds.examples = Tensor<double>::from_vec(Shape{100, 4}, std::move(x));
    ds.labels = std::move(labels);
    ds.class_count = 10;
  }
  auto res = evaluate(spec, ws, ds);
  CHECK(res.error_rate == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(res.mean_cost == doctest::Approx(std::log(10.0)).epsilon(1e-9));

  // perfect memorizer: inputs are one-hot class indicators, weights identity
  auto spec2 = linear_model(10, 10);
  std::vector<double> eye(100, 0.0);
  for (int i = 0; i < 10; ++i) eye[std::size_t(i * 10 + i)] = 8.0;
  auto ws2 = manual_weights(spec2, "head0.w", Tensor<double>::from_vec(Shape{10, 10}, eye));
  data::Dataset ds2;
  {
    std::vector<double> x(30 * 10, 0.0);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) {
      labels[i] = static_cast<int>(i % 10);
      x[i * 10 + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    ds2.examples = Tensor<double>::from_vec(Shape{30, 10}, std::move(x));
    ds2.labels = std::move(labels);
    ds2.class_count = 10;
  }
  CHECK(evaluate(spec2, ws2, ds2).error_rate == 0.0);

  data::Dataset unlabeled;
  unlabeled.examples = Tensor<double>::zeros(Shape{3, 4});
  CHECK_THROWS_AS(evaluate(spec, ws, unlabeled), ValueError);
}

TEST_CASE("checkpoint: resume reproduces the straight-through run bitwise") {
  auto spec = small_mlp();
  RandomSource rng(21);
  auto init = nn::init_weights<double>(spec, rng);
  auto ds = data::make_two_moons(40, 0.1, 6);
  auto split = data::remove_labels(ds, 5, rng);
  auto cfg = quiet_config(Algorithm::MeanTeacher, 1.5);

  // straight run: 8 steps
  auto straight = make_trainer(spec, Algorithm::MeanTeacher, init, 0, 0.6);
  {
    data::SamplerState sampler(split, RandomSource(3));
    for (int s = 0; s < 8; ++s)
      train_step(straight, sampler.sample<double>(2, 6), cfg, RandomSource(55));
  }

  // split run: 4 steps, checkpoint, reload, 4 more
  const std::string path =
      (std::filesystem::temp_directory_path() / "semisup_ckpt_test.bin").string();
  SamplerCursors cursors;
  {
    auto state = make_trainer(spec, Algorithm::MeanTeacher, init, 0, 0.6);
    data::SamplerState sampler(split, RandomSource(3));
    for (int s = 0; s < 4; ++s)
      train_step(state, sampler.sample<double>(2, 6), cfg, RandomSource(55));
    cursors.labeled_pass = sampler.labeled_stream().pass();
    cursors.labeled_cursor = sampler.labeled_stream().cursor();
    cursors.unlabeled_pass = sampler.unlabeled_stream().pass();
    cursors.unlabeled_cursor = sampler.unlabeled_stream().cursor();
    save_checkpoint(path, state, 0xabc, cursors);
  }
  {
    auto state = make_trainer(spec, Algorithm::MeanTeacher, init, 0, 0.6);
    SamplerCursors restored;
    load_checkpoint(path, state, 0xabc, restored);
    CHECK(state.step == 4);
    data::SamplerState sampler(split, RandomSource(3));
    sampler.labeled_stream().restore(restored.labeled_pass, restored.labeled_cursor);
    sampler.unlabeled_stream().restore(restored.unlabeled_pass, restored.unlabeled_cursor);
    for (int s = 0; s < 4; ++s)
      train_step(state, sampler.sample<double>(2, 6), cfg, RandomSource(55));
    CHECK(nn::bitwise_equal(state.student, straight.student));
    CHECK(nn::bitwise_equal(state.ema.teacher, straight.ema.teacher));
  }
  {
    // config-hash mismatch is rejected
    auto state = make_trainer(spec, Algorithm::MeanTeacher, init, 0, 0.6);
    SamplerCursors c2;
    CHECK_THROWS_AS(load_checkpoint(path, state, 0xdef, c2), ConfigError);
  }
  std::remove(path.c_str());
}

TEST_CASE("masked consistency with a full mask equals the plain builders") {
  RandomSource rng(33);
  Tape<double> tape;
  std::vector<double> pv(4 * 3), qv(4 * 3);
  for (std::size_t r = 0; r < 4; ++r) {
    double sp = 0, sq = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      pv[r * 3 + c] = rng.uniform01_open();
      qv[r * 3 + c] = rng.uniform01_open();
      sp += pv[r * 3 + c];
      sq += qv[r * 3 + c];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      pv[r * 3 + c] /= sp;
      qv[r * 3 + c] /= sq;
    }
  }
  const int p = tape.constant(Tensor<double>::from_vec(Shape{4, 3}, pv));
  const int q = tape.constant(Tensor<double>::from_vec(Shape{4, 3}, qv));
  const std::vector<std::uint8_t> full(4, 1);
  using objectives::ConsistencyKind;
  CHECK(tape.value(objectives::consistency_cost_masked(tape, ConsistencyKind::Mse, 0, p, q, full)).item() ==
        doctest::Approx(tape.value(objectives::consistency_mse(tape, p, q)).item()).epsilon(1e-14));
  CHECK(tape.value(objectives::consistency_cost_masked(tape, ConsistencyKind::Kl, 0, p, q, full)).item() ==
        doctest::Approx(tape.value(objectives::consistency_kl(tape, p, q)).item()).epsilon(1e-14));
  CHECK(tape.value(objectives::consistency_cost_masked(tape, ConsistencyKind::CTau, 0.5, p, q, full)).item() ==
        doctest::Approx(tape.value(objectives::consistency_c_tau(tape, p, q, 0.5)).item()).epsilon(1e-14));
}
