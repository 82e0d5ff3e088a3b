#pragma once

#include <map>
#include <string>

#include "semisup/kernels/kernels.hpp"
#include "semisup/nn/model.hpp"
#include "semisup/tensor/tensor.hpp"

namespace semisup::nn {

// Named parameters of one model instance. `trainable` holds the gradient
// targets (direction tensors v, scales g, biases b, or plain weights w);
// `stats` holds the running means for inference-time mean-only batch norm.
// Both the student weights and the EMA teacher copy are WeightSets, and the
// EMA update combines trainable and stats alike.
template <typename T>
struct WeightSet {
  std::map<std::string, Tensor<T>> trainable;
  std::map<std::string, Tensor<T>> stats;
  std::uint64_t fingerprint = 0;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : trainable) n += t.size();
    return n;
  }
};

namespace detail {
template <typename T>
void check_combinable(const WeightSet<T>& a, const WeightSet<T>& b) {
  if (a.fingerprint != b.fingerprint)
    throw ValueError("combine_weights: weight sets come from different model specs");
  if (a.trainable.size() != b.trainable.size() || a.stats.size() != b.stats.size())
    throw ValueError("combine_weights: weight sets have different parameter sets");
}
}  // namespace detail

// Elementwise combination across every tensor, running means included.
template <typename T, typename F>
WeightSet<T> combine_weights(const WeightSet<T>& a, const WeightSet<T>& b, F&& f) {
  detail::check_combinable(a, b);
  WeightSet<T> out;
  out.fingerprint = a.fingerprint;
  auto combine_map = [&](const std::map<std::string, Tensor<T>>& ma,
                         const std::map<std::string, Tensor<T>>& mb,
                         std::map<std::string, Tensor<T>>& mo) {
    for (const auto& [name, ta] : ma) {
      auto it = mb.find(name);
      if (it == mb.end() || it->second.shape() != ta.shape())
        throw ValueError("combine_weights: parameter '" + name + "' missing or mismatched");
      std::vector<T> v(ta.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(ta[i], it->second[i]);
      mo.emplace(name, Tensor<T>::from_vec(ta.shape(), std::move(v)));
    }
  };
  combine_map(a.trainable, b.trainable, out.trainable);
  combine_map(a.stats, b.stats, out.stats);
  return out;
}

// alpha*a + (1-alpha)*b through the lerp kernel; the EMA fast path. alpha = 0
// returns b bitwise and alpha = 1 returns a bitwise.
template <typename T>
WeightSet<T> ema_combine(const WeightSet<T>& a, const WeightSet<T>& b, double alpha) {
  detail::check_combinable(a, b);
  WeightSet<T> out;
  out.fingerprint = a.fingerprint;
  auto lerp_map = [&](const std::map<std::string, Tensor<T>>& ma,
                      const std::map<std::string, Tensor<T>>& mb,
                      std::map<std::string, Tensor<T>>& mo) {
    for (const auto& [name, ta] : ma) {
      auto it = mb.find(name);
      if (it == mb.end() || it->second.shape() != ta.shape())
        throw ValueError("combine_weights: parameter '" + name + "' missing or mismatched");
      std::vector<T> v(ta.size());
      kernels::lerp(ta.data(), it->second.data(), static_cast<T>(alpha), v.data(), v.size());
      mo.emplace(name, Tensor<T>::from_vec(ta.shape(), std::move(v)));
    }
  };
  lerp_map(a.trainable, b.trainable, out.trainable);
  lerp_map(a.stats, b.stats, out.stats);
  return out;
}

template <typename T>
bool bitwise_equal(const WeightSet<T>& a, const WeightSet<T>& b) {
  if (a.trainable.size() != b.trainable.size() || a.stats.size() != b.stats.size())
    return false;
  for (const auto& [name, t] : a.trainable) {
    auto it = b.trainable.find(name);
    if (it == b.trainable.end() || !t.same_values(it->second)) return false;
  }
  for (const auto& [name, t] : a.stats) {
    auto it = b.stats.find(name);
    if (it == b.stats.end() || !t.same_values(it->second)) return false;
  }
  return true;
}

}  // namespace semisup::nn
