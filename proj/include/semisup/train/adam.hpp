#pragma once

#include <cmath>
#include <map>

#include "semisup/nn/weights.hpp"

namespace semisup::train {

// First/second-moment accumulators keyed like the trainable weights. beta2 is
// scheduled by the caller (two-phase), so it arrives per step.
template <typename T>
struct OptimizerState {
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  std::uint64_t step = 0;  // updates taken so far
  double lr = 0.003;
  double beta1 = 0.9;
  double eps = 1e-8;

  static OptimizerState zeros_like(const nn::WeightSet<T>& w) {
    OptimizerState s;
    for (const auto& [name, t] : w.trainable) {
      s.m.emplace(name, Tensor<T>::zeros(t.shape()));
      s.v.emplace(name, Tensor<T>::zeros(t.shape()));
    }
    return s;
  }
};

struct AdamParams {
  double lr;
  double beta1;
  double beta2;
  double eps;
};

// Standard bias-corrected update, in place. grads must be keyed identically
// to the trainable weights.
template <typename T>
void adam_step(OptimizerState<T>& opt, nn::WeightSet<T>& weights,
               const std::map<std::string, Tensor<T>>& grads, const AdamParams& p) {
  if (grads.size() != weights.trainable.size())
    throw ValueError("adam_step: got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(weights.trainable.size()) + " parameters");
  for (const auto& [name, g] : grads)
    if (!weights.trainable.count(name))
      throw ValueError("adam_step: gradient for unknown parameter '" + name + "'");

  const std::uint64_t t = ++opt.step;
  const double bias1 = 1.0 / (1.0 - std::pow(p.beta1, static_cast<double>(t)));
  const double bias2 = 1.0 / (1.0 - std::pow(p.beta2, static_cast<double>(t)));

  for (auto& [name, w] : weights.trainable) {
    const Tensor<T>& g = grads.at(name);
    if (g.shape() != w.shape())
      throw ShapeError("adam_step: gradient shape " + g.shape().str() + " != parameter '" +
                       name + "' shape " + w.shape().str());
    std::vector<T> wv = w.to_vector();
    std::vector<T> mv = opt.m.at(name).to_vector();
    std::vector<T> vv = opt.v.at(name).to_vector();
    kernels::adam_update(wv.data(), mv.data(), vv.data(), g.data(), wv.size(),
                         static_cast<T>(p.lr), static_cast<T>(p.beta1),
                         static_cast<T>(p.beta2), static_cast<T>(p.eps),
                         static_cast<T>(bias1), static_cast<T>(bias2));
    w = Tensor<T>::from_vec(w.shape(), std::move(wv));
    opt.m[name] = Tensor<T>::from_vec(g.shape(), std::move(mv));
    opt.v[name] = Tensor<T>::from_vec(g.shape(), std::move(vv));
  }
}

}  // namespace semisup::train
