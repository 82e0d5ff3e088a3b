#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "semisup/tensor/tensor.hpp"

namespace semisup::train {

// Per-example accumulated prediction vectors Z_i with update counts. The
// training target is the bias-corrected Z_i / (1 - decay^count); an example
// that was never updated has no target yet and its consistency term is
// skipped.
template <typename T>
class TemporalEnsembleStore {
 public:
  TemporalEnsembleStore() = default;
  TemporalEnsembleStore(std::size_t examples, std::size_t classes, double decay)
      : classes_(classes), decay_(decay), z_(examples * classes, T(0)), counts_(examples, 0) {
    if (decay <= 0.0 || decay >= 1.0)
      throw ValueError("temporal ensemble: decay must lie in (0,1), got " +
                       std::to_string(decay));
  }

  std::size_t size() const { return counts_.size(); }
  std::size_t classes() const { return classes_; }
  double decay() const { return decay_; }

  std::uint32_t update_count(std::int64_t id) const { return counts_[checked(id)]; }
  bool has_target(std::int64_t id) const { return update_count(id) > 0; }

  // Bias-corrected target; requires at least one update.
  std::vector<T> target(std::int64_t id) const {
    const std::size_t i = checked(id);
    if (counts_[i] == 0)
      throw ValueError("temporal ensemble: example " + std::to_string(id) +
                       " has no stored prediction yet");
    const double corr =
        1.0 / (1.0 - std::pow(decay_, static_cast<double>(counts_[i])));
    std::vector<T> out(classes_);
    for (std::size_t c = 0; c < classes_; ++c)
      out[c] = static_cast<T>(static_cast<double>(z_[i * classes_ + c]) * corr);
    return out;
  }

  // Z_i <- decay * Z_i + (1 - decay) * probs; exactly once per epoch per
  // example (the sampler's once-per-pass visit order guarantees it).
  void update(std::int64_t id, const T* probs) {
    const std::size_t i = checked(id);
    for (std::size_t c = 0; c < classes_; ++c)
      z_[i * classes_ + c] = static_cast<T>(decay_ * static_cast<double>(z_[i * classes_ + c]) +
                                            (1.0 - decay_) * static_cast<double>(probs[c]));
    ++counts_[i];
  }

  // checkpoint access
  const std::vector<T>& raw_z() const { return z_; }
  const std::vector<std::uint32_t>& raw_counts() const { return counts_; }
  void restore(std::vector<T> z, std::vector<std::uint32_t> counts) {
    if (z.size() != counts.size() * classes_)
      throw ValueError("temporal ensemble: restore size mismatch");
    z_ = std::move(z);
    counts_ = std::move(counts);
  }

 private:
  std::size_t checked(std::int64_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= counts_.size())
      throw ValueError("temporal ensemble: unknown example id " + std::to_string(id));
    return static_cast<std::size_t>(id);
  }

  std::size_t classes_ = 0;
  double decay_ = 0.6;
  std::vector<T> z_;
  std::vector<std::uint32_t> counts_;
};

}  // namespace semisup::train
