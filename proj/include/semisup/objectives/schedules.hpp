#pragma once

#include <cmath>
#include <cstdint>

namespace semisup::objectives {

// Sigmoid-shaped ramp-up e^(-5(1-x)^2) with x = step/ramp_steps clamped to
// [0,1]; ramp_steps == 0 means no ramp (always 1).
inline double rampup_sigmoid(std::uint64_t step, std::uint64_t ramp_steps) {
  if (ramp_steps == 0) return 1.0;
  const double x = std::min(1.0, static_cast<double>(step) / static_cast<double>(ramp_steps));
  return std::exp(-5.0 * (1.0 - x) * (1.0 - x));
}

// Multiplier 1 before `start`, then e^(-12.5 x^2) with x the elapsed fraction
// of the [start, total] window, reaching ~0 at `total`.
inline double rampdown_sigmoid(std::uint64_t step, std::uint64_t start, std::uint64_t total) {
  if (step < start || total <= start) return 1.0;
  const double x = std::min(
      1.0, static_cast<double>(step - start) / static_cast<double>(total - start));
  return std::exp(-12.5 * x * x);
}

inline double cosine_anneal(std::uint64_t step, std::uint64_t horizon, double max_value) {
  const double x = std::min(1.0, static_cast<double>(step) / static_cast<double>(horizon));
  return max_value * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

// Boundary step belongs to the "after" phase.
inline double two_phase(std::uint64_t step, std::uint64_t switch_step, double before,
                        double after) {
  return step < switch_step ? before : after;
}

}  // namespace semisup::objectives
