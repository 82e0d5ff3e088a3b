#include "doctest.h"

#include <cmath>

#include "semisup/nn/forward.hpp"

using namespace semisup;
using namespace semisup::nn;

namespace {

ModelSpec tiny_mlp(int heads = 1) {
  ModelSpec spec;
  spec.input_shape = Shape{2};
  spec.head_count = heads;
  LayerSpec noise;
  noise.kind = LayerKind::GaussianNoise;
  noise.sigma = 0.1;
  spec.layers.push_back(noise);
  LayerSpec d1;
  d1.kind = LayerKind::Dense;
  d1.units = 16;
  spec.layers.push_back(d1);
  LayerSpec drop;
  drop.kind = LayerKind::Dropout;
  drop.rate = 0.3;
  spec.layers.push_back(drop);
  LayerSpec d2;
  d2.kind = LayerKind::Dense;
  d2.units = 16;
  spec.layers.push_back(d2);
  LayerSpec head;
  head.kind = LayerKind::SoftmaxHead;
  head.units = 2;
  spec.layers.push_back(head);
  validate_model(spec);
  return spec;
}

}  // namespace

TEST_CASE("canonical convnet: table ordering, flip flag, scaled variants") {
  auto spec = canonical_convnet_spec(Shape{32, 32, 3}, /*flip_allowed=*/true);
  CHECK(spec.class_count() == 10);
  CHECK(spec.augment.translate_max == 2);
  CHECK(spec.augment.flip);
  CHECK(spec.lrelu_slope == 0.1);

  // Table ordering: gnoise, 3x conv128, pool, drop, 3x conv256, pool, drop,
  // conv512 valid, conv256 1x1, conv128 1x1, avgpool, head
  CHECK(layers_to_string(spec.layers) ==
        "gnoise:0.15|conv:128:3:same|conv:128:3:same|conv:128:3:same|maxpool|dropout:0.5|"
        "conv:256:3:same|conv:256:3:same|conv:256:3:same|maxpool|dropout:0.5|conv:512:3:valid|"
        "conv:256:1:same|conv:128:1:same|avgpool|head:10");

  auto no_flip = canonical_convnet_spec(Shape{32, 32, 3}, false);
  CHECK(!no_flip.augment.flip);

  // scaled variant: one pooling stage removed, still 10 logits
  auto small = canonical_convnet_spec(Shape{16, 16, 3}, false);
  int pools = 0;
  for (const auto& l : small.layers)
    if (l.kind == LayerKind::MaxPool) ++pools;
  CHECK(pools == 1);
  CHECK(small.class_count() == 10);
  auto shapes = validate_model(small);
  CHECK(shapes.back() == Shape{10});

  CHECK_THROWS_AS(canonical_convnet_spec(Shape{12, 12, 3}, false), ShapeError);
  CHECK_THROWS_AS(canonical_convnet_spec(Shape{4, 4, 3}, false), ShapeError);
}

TEST_CASE("canonical convnet parameter count is a stable constant") {
  // spatial size does not change parameter shapes; use the cheap 8x8 variant
  RandomSource rng(1);
  auto spec = canonical_convnet_spec(Shape{8, 8, 3}, false);
  auto ws = init_weights<float>(spec, rng);
  CHECK(ws.parameter_count() == 3121812);
}

TEST_CASE("model validation rejects broken chains") {
  ModelSpec bad;
  bad.input_shape = Shape{6, 6, 1};
  LayerSpec pool;
  pool.kind = LayerKind::MaxPool;
  LayerSpec head;
  head.kind = LayerKind::SoftmaxHead;
  head.units = 10;
  bad.layers = {pool, pool, head};  // 6 -> 3 -> odd, and head on image input
  CHECK_THROWS_AS(validate_model(bad), ConfigError);

  ModelSpec no_head = tiny_mlp();
  no_head.layers.pop_back();
  CHECK_THROWS_AS(validate_model(no_head), ConfigError);
}

TEST_CASE("layer list serialization round-trips") {
  auto spec = canonical_convnet_spec(Shape{32, 32, 3}, true);
  auto text = layers_to_string(spec.layers);
  CHECK(layers_to_string(layers_from_string(text)) == text);

  auto custom = layers_from_string("gnoise:0.15|dense:64:nobn|dropout:0.25|head:4:nown:nobias");
  CHECK(custom.size() == 4);
  CHECK(custom[1].kind == LayerKind::Dense);
  CHECK(!custom[1].mean_only_bn);
  CHECK(custom[1].weight_norm);
  CHECK(!custom[3].weight_norm);
  CHECK(!custom[3].bias);
  CHECK(layers_to_string(custom) == "gnoise:0.15|dense:64:nobn|dropout:0.25|head:4:nown:nobias");
  CHECK_THROWS_AS(layers_from_string("conv:xyz:3"), ConfigError);
  CHECK_THROWS_AS(layers_from_string("wat:1"), ConfigError);
}

TEST_CASE("init determinism and calibration") {
  auto spec = tiny_mlp();
  RandomSource a(5), b(5), c(6);
  auto wa = init_weights<double>(spec, a);
  auto wb = init_weights<double>(spec, b);
  CHECK(bitwise_equal(wa, wb));

  auto wc = init_weights<double>(spec, c);
  double max_delta = 0;
  for (const auto& [name, t] : wa.trainable) {
    const auto& o = wc.trainable.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      max_delta = std::max(max_delta, std::abs(t[i] - o[i]));
  }
  CHECK(max_delta > 0.0);

  // fresh standardized batch: per-layer pre-activation stdev within [0.5, 2]
  RandomSource data_rng(99);
  auto batch = draw_noise<double>(data_rng, NoiseKind::Gaussian, 1.0, 0, Shape{128, 2});
  Tape<double> tape;
  ForwardOptions opts;
  opts.trainable = false;
  opts.keep_taps = true;
  NoiseConfig no_noise;
  no_noise.input_noise = false;
  no_noise.dropout = false;
  auto r = forward(spec, wa, batch, no_noise, data_rng, tape, opts);
  REQUIRE(r.taps.size() == 3);  // two dense layers + head
  for (const auto& [layer_idx, tap] : r.taps) {
    const auto& t = tape.value(tap);
    double mean = 0;
    for (std::size_t i = 0; i < t.size(); ++i) mean += t[i];
    mean /= static_cast<double>(t.size());
    double var = 0;
    for (std::size_t i = 0; i < t.size(); ++i) var += (t[i] - mean) * (t[i] - mean);
    const double stdev = std::sqrt(var / static_cast<double>(t.size()));
    CHECK(stdev >= 0.5);
    CHECK(stdev <= 2.0);
  }
}

TEST_CASE("evaluation-mode forward is a pure function of weights and inputs") {
  auto spec = tiny_mlp();
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{7, 2});
  auto p1 = predict(spec, ws, x);
  auto p2 = predict(spec, ws, x);
  CHECK(p1.same_values(p2));
  for (std::size_t r = 0; r < 7; ++r) {
    double sum = 0;
    for (std::size_t j = 0; j < 2; ++j) sum += p1[r * 2 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("training noise is seeded per (side, step) and differs from eval") {
  auto spec = tiny_mlp();
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{7, 2});

  auto run = [&](const char* side, std::uint64_t step) {
    Tape<double> tape;
    ForwardOptions opts;
    opts.trainable = false;
    opts.side = side;
    opts.step = step;
    auto r = forward(spec, ws, x, NoiseConfig{}, rng, tape, opts);
    return tape.value(r.probs[0]);
  };
  CHECK(run("student", 3).same_values(run("student", 3)));   // reproducible
  CHECK(!run("student", 3).same_values(run("student", 4)));  // step changes draws
  CHECK(!run("student", 3).same_values(run("teacher", 3)));  // side changes draws
  CHECK(!run("student", 3).same_values(predict(spec, ws, x)));
}

TEST_CASE("mean-only batch norm centers training pre-activations") {
  auto spec = tiny_mlp();
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{32, 2});
  Tape<double> tape;
  ForwardOptions opts;
  opts.trainable = false;
  opts.keep_taps = true;
  NoiseConfig no_noise;
  no_noise.input_noise = false;
  no_noise.dropout = false;
  auto r = forward(spec, ws, x, no_noise, rng, tape, opts);
  for (const auto& [layer_idx, tap] : r.taps) {
    const auto& t = tape.value(tap);
    const std::size_t c = t.shape()[t.shape().rank() - 1];
    const std::size_t rows = t.size() / c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean = 0;
      for (std::size_t rr = 0; rr < rows; ++rr) mean += t[rr * c + ch];
      mean /= static_cast<double>(rows);
      CHECK(std::abs(mean) <= 1e-6);
    }
  }
}

TEST_CASE("running means update in training mode and feed evaluation") {
  auto spec = tiny_mlp();
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{16, 2});
  Tape<double> tape;
  ForwardOptions opts;
  opts.trainable = false;
  opts.collect_stat_updates = true;
  auto r = forward(spec, ws, x, NoiseConfig{}, rng, tape, opts);
  CHECK(r.stat_updates.size() == 3);
  auto before = ws.stats;
  apply_stat_updates(ws, r);
  bool changed = false;
  for (const auto& [name, t] : ws.stats) changed = changed || !t.same_values(before.at(name));
  CHECK(changed);
}

TEST_CASE("dual head: two outputs from a shared trunk, gradients isolated") {
  auto spec = tiny_mlp(/*heads=*/2);
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{6, 2});

  Tape<double> tape;
  ForwardOptions opts;  // trainable
  auto r = forward(spec, ws, x, NoiseConfig::evaluation(), rng, tape, opts);
  REQUIRE(r.logits.size() == 2);
  REQUIRE(r.probs.size() == 2);
  CHECK(tape.value(r.probs[0]).shape() == Shape{6, 2});
  CHECK(tape.value(r.probs[1]).shape() == Shape{6, 2});
  CHECK(!tape.value(r.probs[0]).same_values(tape.value(r.probs[1])));

  // loss through head 0 only
  const int loss = tape.apply(PrimOp::MeanAll,
                              {tape.apply(PrimOp::Mul, {r.probs[0], r.probs[0]})});
  auto grads = tape.backward(loss);
  double trunk_grad = 0, head1_grad = 0;
  bool saw_head1 = false;
  for (const auto& [leaf, name] : r.weight_leaves) {
    if (!grads.count(leaf)) {
      if (name.rfind("head1.", 0) == 0) saw_head1 = true;
      continue;
    }
    const auto& g = grads.at(leaf);
    double mag = 0;
    for (std::size_t i = 0; i < g.size(); ++i) mag += std::abs(g[i]);
    if (name.rfind("head1.", 0) == 0) {
      head1_grad += mag;
      saw_head1 = true;
    } else if (name.rfind("l", 0) == 0) {
      trunk_grad += mag;
    }
  }
  CHECK(saw_head1);
  CHECK(trunk_grad > 0.0);
  CHECK(head1_grad == 0.0);
}

TEST_CASE("combine_weights: projections, averages, elementwise oracle") {
  auto spec = tiny_mlp();
  RandomSource r1(5), r2(77);
  auto a = init_weights<double>(spec, r1);
  auto b = init_weights<double>(spec, r2);

  auto left = combine_weights(a, b, [](double x, double) { return x; });
  CHECK(bitwise_equal(left, a));

  auto avg_self = combine_weights(a, a, [](double x, double y) { return 0.5 * (x + y); });
  CHECK(bitwise_equal(avg_self, a));

  auto mix = ema_combine(a, b, 0.999);
  for (const auto& [name, t] : mix.trainable) {
    const auto& ta = a.trainable.at(name);
    const auto& tb = b.trainable.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(std::abs(t[i] - (0.999 * ta[i] + 0.001 * tb[i])) <= 1e-12);
  }

  auto other_spec = tiny_mlp(2);
  RandomSource r3(5);
  auto c = init_weights<double>(other_spec, r3);
  CHECK_THROWS_AS(combine_weights(a, c, [](double x, double) { return x; }), ValueError);
}

TEST_CASE("weight-normalized output is invariant to rescaling the direction") {
  auto spec = tiny_mlp();
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto x = draw_noise<double>(rng, NoiseKind::Gaussian, 1.0, 0, Shape{5, 2});
  auto base = predict(spec, ws, x);

  auto scaled = ws;
  for (auto& [name, t] : scaled.trainable) {
    if (name.size() > 2 && name.substr(name.size() - 2) == ".v") {
      std::vector<double> v(t.size());
      kernels::scale(t.data(), 3.7, v.data(), v.size());
      t = Tensor<double>::from_vec(t.shape(), std::move(v));
    }
  }
  auto rescaled = predict(spec, scaled, x);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(std::abs(base[i] - rescaled[i]) <= 1e-6);
}

TEST_CASE("forward rejects foreign weight sets and bad input shapes") {
  auto spec = tiny_mlp();
  auto other = tiny_mlp(2);
  RandomSource rng(5);
  auto ws = init_weights<double>(spec, rng);
  auto wrong = init_weights<double>(other, rng);
  auto x = Tensor<double>::zeros(Shape{3, 2});
  Tape<double> tape;
  CHECK_THROWS_AS(forward(spec, wrong, x, NoiseConfig::evaluation(), rng, tape), ValueError);
  auto bad = Tensor<double>::zeros(Shape{3, 5});
  CHECK_THROWS_AS(forward(spec, ws, bad, NoiseConfig::evaluation(), rng, tape), ShapeError);
}
