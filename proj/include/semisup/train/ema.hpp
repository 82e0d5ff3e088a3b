#pragma once

#include "semisup/nn/weights.hpp"

namespace semisup::train {

// Teacher weights: the exponential moving average of successive student
// weights, covering trainable parameters and running means alike so the
// teacher stays a complete evaluable model.
template <typename T>
struct EMAState {
  nn::WeightSet<T> teacher;
};

// teacher <- alpha * teacher + (1 - alpha) * student. alpha = 0 copies the
// student bitwise; alpha = 1 leaves the teacher untouched.
template <typename T>
void ema_update(EMAState<T>& ema, const nn::WeightSet<T>& student, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ValueError("ema_update: alpha must lie in [0,1], got " + std::to_string(alpha));
  ema.teacher = nn::ema_combine(ema.teacher, student, alpha);
}

}  // namespace semisup::train
