#pragma once

#include <string>
#include <utility>
#include <vector>

#include "semisup/nn/weights.hpp"
#include "semisup/tensor/tape.hpp"

namespace semisup::nn {

// Per-side noise switches. Evaluation mode wins over everything: no noise,
// running means instead of batch means.
struct NoiseConfig {
  bool eval = false;
  bool augment = true;        // input augmentation (applied in data space by the trainer)
  bool input_noise = true;    // gaussian input-noise layers
  double input_sigma = -1.0;  // >= 0 overrides the layer sigma
  bool dropout = true;

  static NoiseConfig evaluation() {
    NoiseConfig n;
    n.eval = true;
    n.augment = false;
    n.input_noise = false;
    n.dropout = false;
    return n;
  }
};

struct ForwardOptions {
  bool trainable = true;              // weights as gradient leaves vs constants
  bool collect_stat_updates = false;  // emit updated running means (student training pass)
  double bn_decay = 0.999;            // running-mean EMA decay
  std::string side = "student";       // noise sub-stream prefix
  std::uint64_t step = 0;             // noise sub-stream index
  bool keep_taps = false;             // record centered pre-activations for tests
};

template <typename T>
struct ForwardResult {
  std::vector<int> logits;  // tape ids, one per head
  std::vector<int> probs;
  std::vector<std::pair<std::string, Tensor<T>>> stat_updates;
  std::vector<std::pair<int, std::string>> weight_leaves;  // leaf id -> parameter name
  std::vector<std::pair<std::size_t, int>> taps;           // layer index -> centered pre-act id
};

namespace detail {

inline std::string param_prefix(std::size_t layer_idx) { return "l" + std::to_string(layer_idx); }

template <typename T>
const Tensor<T>& named(const std::map<std::string, Tensor<T>>& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw ValueError("weights: missing parameter '" + name + "'");
  return it->second;
}

}  // namespace detail

// Noisy forward evaluation on a tape. Weights are not mutated; running-mean
// updates come back in the result for the caller to apply (the running mean
// tracks the batch mean by EMA in training mode only).
template <typename T>
ForwardResult<T> forward(const ModelSpec& spec, const WeightSet<T>& weights,
                         const Tensor<T>& inputs, const NoiseConfig& noise,
                         const RandomSource& rng, Tape<T>& tape,
                         const ForwardOptions& opts = {}) {
  if (weights.fingerprint != model_fingerprint(spec))
    throw ValueError("forward: weight set does not belong to this model spec");
  if (inputs.shape().rank() != spec.input_shape.rank() + 1)
    throw ShapeError("forward: inputs " + inputs.shape().str() + " must be batched " +
                     spec.input_shape.str());
  for (std::size_t d = 0; d < spec.input_shape.rank(); ++d)
    if (inputs.shape()[d + 1] != spec.input_shape[d])
      throw ShapeError("forward: inputs " + inputs.shape().str() + " do not match model input " +
                       spec.input_shape.str());

  const bool train = !noise.eval;
  ForwardResult<T> res;

  auto weight_leaf = [&](const std::string& name) {
    const Tensor<T>& t = detail::named(weights.trainable, name);
    const int id = opts.trainable ? tape.leaf(t) : tape.constant(t);
    res.weight_leaves.emplace_back(id, name);
    return id;
  };

  // shared implementation of conv / dense / softmax head
  auto weighted_layer = [&](const LayerSpec& l, const std::string& prefix, int x,
                            std::size_t layer_idx) {
    int w;
    if (l.weight_norm) {
      const int v = weight_leaf(prefix + ".v");
      const int g = weight_leaf(prefix + ".g");
      w = tape.apply(PrimOp::WeightNorm, {v, g});
    } else {
      w = weight_leaf(prefix + ".w");
    }
    int pre = l.kind == LayerKind::Conv
                  ? tape.apply(PrimOp::Conv2d, {x, w}, {.padding = l.padding})
                  : tape.apply(PrimOp::MatMul, {x, w});
    if (l.mean_only_bn) {
      if (train) {
        const int mu = tape.apply(PrimOp::ChannelMean, {pre});
        pre = tape.apply(PrimOp::SubChannel, {pre, mu});
        if (opts.collect_stat_updates) {
          const Tensor<T>& old = detail::named(weights.stats, prefix + ".rmean");
          const Tensor<T>& batch_mean = tape.value(mu);
          std::vector<T> upd(old.size());
          kernels::lerp(old.data(), batch_mean.data(), static_cast<T>(opts.bn_decay),
                        upd.data(), upd.size());
          res.stat_updates.emplace_back(prefix + ".rmean",
                                        Tensor<T>::from_vec(old.shape(), std::move(upd)));
        }
      } else {
        pre = tape.apply(PrimOp::SubChannel,
                         {pre, tape.constant(detail::named(weights.stats, prefix + ".rmean"))});
      }
    }
    if (l.bias) pre = tape.apply(PrimOp::AddChannel, {pre, weight_leaf(prefix + ".b")});
    if (opts.keep_taps) res.taps.emplace_back(layer_idx, pre);
    return pre;
  };

  int x = tape.constant(inputs);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::GaussianNoise: {
        const double sigma = noise.input_sigma >= 0.0 ? noise.input_sigma : l.sigma;
        if (train && noise.input_noise && sigma > 0.0) {
          auto sub = rng.substream(opts.side + ".gnoise.l" + std::to_string(i), opts.step);
          x = tape.apply(PrimOp::Add,
                         {x, tape.constant(draw_noise<T>(sub, NoiseKind::Gaussian, sigma, 0,
                                                         tape.value(x).shape()))});
        }
        break;
      }
      case LayerKind::Dropout: {
        if (train && noise.dropout && l.rate > 0.0) {
          const double keep = 1.0 - l.rate;
          auto sub = rng.substream(opts.side + ".dropout.l" + std::to_string(i), opts.step);
          auto mask = draw_noise<T>(sub, NoiseKind::Bernoulli, keep, 0, tape.value(x).shape());
          std::vector<T> scaled(mask.size());
          kernels::scale(mask.data(), static_cast<T>(1.0 / keep), scaled.data(), scaled.size());
          x = tape.apply(PrimOp::Mul, {x, tape.constant(Tensor<T>::from_vec(mask.shape(),
                                                                            std::move(scaled)))});
        }
        break;
      }
      case LayerKind::MaxPool:
        x = tape.apply(PrimOp::MaxPool2x2, {x});
        break;
      case LayerKind::AvgPool:
        x = tape.apply(PrimOp::GlobalAvgPool, {x});
        break;
      case LayerKind::Flatten:
        x = tape.apply(PrimOp::FlattenRows, {x});
        break;
      case LayerKind::Conv:
      case LayerKind::Dense: {
        const int pre = weighted_layer(l, detail::param_prefix(i), x, i);
        x = tape.apply(PrimOp::LeakyRelu, {pre}, {.scalar = spec.lrelu_slope});
        break;
      }
      case LayerKind::SoftmaxHead: {
        for (int h = 0; h < spec.head_count; ++h) {
          const int logits = weighted_layer(l, "head" + std::to_string(h), x, i);
          res.logits.push_back(logits);
          res.probs.push_back(tape.apply(PrimOp::Softmax, {logits}));
        }
        break;
      }
    }
  }
  return res;
}

template <typename T>
void apply_stat_updates(WeightSet<T>& weights, const ForwardResult<T>& result) {
  for (const auto& [name, value] : result.stat_updates) weights.stats[name] = value;
}

// Deterministic evaluation-mode class probabilities.
template <typename T>
Tensor<T> predict(const ModelSpec& spec, const WeightSet<T>& weights, const Tensor<T>& inputs,
                  int head = 0) {
  Tape<T> tape;
  RandomSource unused(0);
  ForwardOptions opts;
  opts.trainable = false;
  auto r = forward(spec, weights, inputs, NoiseConfig::evaluation(), unused, tape, opts);
  return tape.value(r.probs[static_cast<std::size_t>(head)]);
}

// ---------------------------------------------------------------------------
// Initialization: random directions plus a data-dependent pass that rescales
// every weighted layer to roughly unit pre-activation variance on a
// calibration batch, then seeds the running means from the same batch.
// ---------------------------------------------------------------------------

template <typename T>
WeightSet<T> init_weights(const ModelSpec& spec, const RandomSource& rng,
                          const Tensor<T>* calibration = nullptr) {
  const auto shapes = validate_model(spec);
  WeightSet<T> ws;
  ws.fingerprint = model_fingerprint(spec);

  // parameter allocation
  Shape cur = spec.input_shape;
  auto alloc_weighted = [&](const LayerSpec& l, const std::string& prefix, const Shape& in) {
    Shape wshape;
    std::size_t fan_in = 0, out_c = 0;
    if (l.kind == LayerKind::Conv) {
      wshape = Shape{l.kernel, l.kernel, in[2], l.filters};
      fan_in = l.kernel * l.kernel * in[2];
      out_c = l.filters;
    } else {
      wshape = Shape{in[0], l.units};
      fan_in = in[0];
      out_c = l.units;
    }
    if (l.weight_norm) {
      auto sub = rng.substream("init." + prefix + ".v");
      ws.trainable.emplace(prefix + ".v",
                           draw_noise<T>(sub, NoiseKind::Gaussian, 1.0, 0, wshape));
      ws.trainable.emplace(prefix + ".g", Tensor<T>::full(Shape{out_c}, T(1)));
    } else {
      auto sub = rng.substream("init." + prefix + ".w");
      ws.trainable.emplace(
          prefix + ".w",
          draw_noise<T>(sub, NoiseKind::Gaussian, std::sqrt(2.0 / static_cast<double>(fan_in)),
                        0, wshape));
    }
    if (l.bias) ws.trainable.emplace(prefix + ".b", Tensor<T>::zeros(Shape{out_c}));
    if (l.mean_only_bn) ws.stats.emplace(prefix + ".rmean", Tensor<T>::zeros(Shape{out_c}));
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::SoftmaxHead) {
      for (int h = 0; h < spec.head_count; ++h)
        alloc_weighted(l, "head" + std::to_string(h), cur);
    } else if (l.weighted()) {
      alloc_weighted(l, detail::param_prefix(i), cur);
    }
    cur = shapes[i];
  }

  // calibration batch: standardized synthetic inputs unless provided (small
  // for images, where each example already contributes H*W samples per channel)
  Tensor<T> x;
  if (calibration) {
    x = *calibration;
  } else {
    std::vector<std::size_t> dims{spec.input_shape.rank() == 3 ? 8u : 64u};
    for (std::size_t d = 0; d < spec.input_shape.rank(); ++d)
      dims.push_back(spec.input_shape[d]);
    auto sub = rng.substream("init.calib");
    x = draw_noise<T>(sub, NoiseKind::Gaussian, 1.0, 0, Shape(dims));
  }

  auto calibrate_weighted = [&](const LayerSpec& l, const std::string& prefix,
                                const Tensor<T>& in) {
    Tensor<T> w_eff;
    if (l.weight_norm)
      w_eff = apply_primitive(PrimOp::WeightNorm, {ws.trainable.at(prefix + ".v"),
                                                   ws.trainable.at(prefix + ".g")});
    else
      w_eff = ws.trainable.at(prefix + ".w");
    Tensor<T> pre = l.kind == LayerKind::Conv
                        ? apply_primitive(PrimOp::Conv2d, {in, w_eff}, {.padding = l.padding})
                        : apply_primitive(PrimOp::MatMul, {in, w_eff});
    const std::size_t c = pre.shape()[pre.shape().rank() - 1];
    const std::size_t rows = pre.size() / c;
    std::vector<double> mu(c, 0.0), sd(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) mu[ch] += static_cast<double>(pre[r * c + ch]);
    for (auto& v : mu) v /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(pre[r * c + ch]) - mu[ch];
        sd[ch] += d * d;
      }
    for (auto& v : sd) v = std::max(std::sqrt(v / static_cast<double>(rows)), 1e-3);

    // fold 1/sd into the layer scale
    if (l.weight_norm) {
      const Tensor<T>& g = ws.trainable.at(prefix + ".g");
      std::vector<T> ng(c);
      for (std::size_t ch = 0; ch < c; ++ch) ng[ch] = static_cast<T>(g[ch] / sd[ch]);
      ws.trainable[prefix + ".g"] = Tensor<T>::from_vec(g.shape(), std::move(ng));
    } else {
      const Tensor<T>& w = ws.trainable.at(prefix + ".w");
      std::vector<T> nw(w.size());
      const std::size_t wc = w.shape()[w.shape().rank() - 1];
      for (std::size_t i2 = 0; i2 < w.size(); ++i2)
        nw[i2] = static_cast<T>(w[i2] / sd[i2 % wc]);
      ws.trainable[prefix + ".w"] = Tensor<T>::from_vec(w.shape(), std::move(nw));
    }
    const bool center = l.mean_only_bn || l.bias;
    if (!l.mean_only_bn && l.bias) {
      std::vector<T> nb(c);
      for (std::size_t ch = 0; ch < c; ++ch) nb[ch] = static_cast<T>(-mu[ch] / sd[ch]);
      ws.trainable[prefix + ".b"] = Tensor<T>::from_vec(Shape{c}, std::move(nb));
    }
    if (l.mean_only_bn) {
      std::vector<T> rm(c);
      for (std::size_t ch = 0; ch < c; ++ch) rm[ch] = static_cast<T>(mu[ch] / sd[ch]);
      ws.stats[prefix + ".rmean"] = Tensor<T>::from_vec(Shape{c}, std::move(rm));
    }
    // centered, rescaled pre-activation feeds the next layer
    std::vector<T> out(pre.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = static_cast<double>(pre[r * c + ch]);
        out[r * c + ch] = static_cast<T>(center ? (v - mu[ch]) / sd[ch] : v / sd[ch]);
      }
    return Tensor<T>::from_vec(pre.shape(), std::move(out));
  };

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::GaussianNoise:
      case LayerKind::Dropout:
        break;  // calibration runs noise-free
      case LayerKind::MaxPool:
        x = apply_primitive(PrimOp::MaxPool2x2, {x});
        break;
      case LayerKind::AvgPool:
        x = apply_primitive(PrimOp::GlobalAvgPool, {x});
        break;
      case LayerKind::Flatten:
        x = apply_primitive(PrimOp::FlattenRows, {x});
        break;
      case LayerKind::Conv:
      case LayerKind::Dense: {
        Tensor<T> pre = calibrate_weighted(l, detail::param_prefix(i), x);
        x = apply_primitive(PrimOp::LeakyRelu, {pre}, {.scalar = spec.lrelu_slope});
        break;
      }
      case LayerKind::SoftmaxHead: {
        for (int h = 0; h < spec.head_count; ++h)
          calibrate_weighted(l, "head" + std::to_string(h), x);
        break;
      }
    }
  }
  return ws;
}

}  // namespace semisup::nn
