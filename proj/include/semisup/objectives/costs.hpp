#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "semisup/tensor/tape.hpp"

namespace semisup::objectives {

// Probabilities are clamped to this floor before any log; hard one-hot
// targets would otherwise produce infinities.
inline constexpr double kLogFloor = 1e-12;

enum class ConsistencyKind { Mse, Kl, CTau };

struct ConsistencyConfig {
  ConsistencyKind kind = ConsistencyKind::Mse;
  double tau = 1.0;          // CTau only, in (0,1]
  double max_weight = 0.0;   // final consistency weight after ramp-up
  std::uint64_t rampup_steps = 0;
};

// Everything the per-step total cost is composed of; total must recompose
// from the parts exactly (checked at 64-bit).
struct CostBreakdown {
  double classification = 0.0;
  double class_weight = 0.0;
  double consistency_raw = 0.0;
  double consistency_weight = 0.0;
  double coupling = 0.0;
  double coupling_weight = 0.0;
  double total = 0.0;

  double recomposed() const {
    return classification * class_weight + consistency_raw * consistency_weight +
           coupling * coupling_weight;
  }
};

namespace detail {

template <typename T>
void check_simplex_rows(const Tensor<T>& p, const char* who) {
  const auto& s = p.shape();
  if (s.rank() != 2) throw ShapeError(std::string(who) + ": probabilities must be rank 2");
  const std::size_t m = s[0], n = s[1];
  for (std::size_t r = 0; r < m; ++r) {
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) sum += p[r * n + j];
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-5)
      throw ValueError(std::string(who) + ": row " + std::to_string(r) +
                       " does not sum to 1 (got " + std::to_string(static_cast<double>(sum)) +
                       ")");
  }
}

}  // namespace detail

// Mean cross-entropy between predicted probabilities and one-hot labels over
// the masked rows only; an all-zero mask contributes a constant 0 (mixed-mode
// batches may legitimately carry no labels).
template <typename T>
int classification_cost(Tape<T>& tape, int probs, const std::vector<int>& labels,
                        const std::vector<std::uint8_t>& labeled_mask) {
  const Tensor<T>& p = tape.value(probs);
  detail::check_simplex_rows(p, "classification_cost");
  const std::size_t m = p.shape()[0], n = p.shape()[1];
  if (labels.size() != m || labeled_mask.size() != m)
    throw ShapeError("classification_cost: labels/mask length " +
                     std::to_string(labels.size()) + "/" + std::to_string(labeled_mask.size()) +
                     " does not match batch " + std::to_string(m));
  std::size_t count = 0;
  std::vector<T> onehot(m * n, T(0));
  for (std::size_t r = 0; r < m; ++r) {
    if (!labeled_mask[r]) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= n)
      throw ValueError("classification_cost: label " + std::to_string(labels[r]) +
                       " outside [0," + std::to_string(n) + ") at row " + std::to_string(r));
    onehot[r * n + static_cast<std::size_t>(labels[r])] = T(1);
    ++count;
  }
  if (count == 0) return tape.constant(Tensor<T>::scalar(T(0)));
  const int y = tape.constant(Tensor<T>::from_vec(p.shape(), std::move(onehot)));
  const int logp = tape.apply(PrimOp::Log,
                              {tape.apply(PrimOp::ClampMin, {probs}, {.scalar = kLogFloor})});
  const int picked = tape.apply(PrimOp::Mul, {y, logp});
  return tape.apply(PrimOp::Scale, {tape.apply(PrimOp::SumAll, {picked})},
                    {.scalar = -1.0 / static_cast<double>(count)});
}

// Batch mean of (1/N) sum_i (p_i - q_i)^2. Symmetric in p and q.
template <typename T>
int consistency_mse(Tape<T>& tape, int p, int q) {
  detail::check_simplex_rows(tape.value(p), "consistency_mse");
  detail::check_simplex_rows(tape.value(q), "consistency_mse");
  const int d = tape.apply(PrimOp::Sub, {p, q});
  return tape.apply(PrimOp::MeanAll, {tape.apply(PrimOp::Mul, {d, d})});
}

// Batch mean of KL(p || q); p is the target side.
template <typename T>
int consistency_kl(Tape<T>& tape, int p, int q) {
  const Tensor<T>& pv = tape.value(p);
  detail::check_simplex_rows(pv, "consistency_kl");
  detail::check_simplex_rows(tape.value(q), "consistency_kl");
  const std::size_t batch = pv.shape()[0];
  const PrimAttrs clamp{.scalar = kLogFloor};
  const int lp = tape.apply(PrimOp::Log, {tape.apply(PrimOp::ClampMin, {p}, clamp)});
  const int lq = tape.apply(PrimOp::Log, {tape.apply(PrimOp::ClampMin, {q}, clamp)});
  const int terms = tape.apply(PrimOp::Mul, {p, tape.apply(PrimOp::Sub, {lp, lq})});
  return tape.apply(PrimOp::Scale, {tape.apply(PrimOp::SumAll, {terms})},
                    {.scalar = 1.0 / static_cast<double>(batch)});
}

// C_tau(p,q) = Z_tau KL(tau p + (1-tau)/N || tau q + (1-tau)/N) with
// Z_tau = 2/(N^2 tau^2), batch-averaged. tau = 1 gives (2/N^2) KL(p||q)
// exactly; tau -> 0 approaches the MSE cost. Not symmetric.
template <typename T>
int consistency_c_tau(Tape<T>& tape, int p, int q, double tau) {
  if (!(tau > 0.0) || tau > 1.0)
    throw ValueError("consistency_c_tau: tau must lie in (0,1], got " + std::to_string(tau) +
                     " (use consistency_mse for the tau->0 limit)");
  const Tensor<T>& pv = tape.value(p);
  detail::check_simplex_rows(pv, "consistency_c_tau");
  detail::check_simplex_rows(tape.value(q), "consistency_c_tau");
  const std::size_t n = pv.shape()[1];
  const double z = 2.0 / (static_cast<double>(n) * static_cast<double>(n) * tau * tau);
  const int uniform = tape.constant(
      Tensor<T>::full(Shape{n}, static_cast<T>((1.0 - tau) / static_cast<double>(n))));
  const PrimAttrs by_tau{.scalar = tau};
  const int pt = tape.apply(PrimOp::AddChannel, {tape.apply(PrimOp::Scale, {p}, by_tau), uniform});
  const int qt = tape.apply(PrimOp::AddChannel, {tape.apply(PrimOp::Scale, {q}, by_tau), uniform});
  return tape.apply(PrimOp::Scale, {consistency_kl(tape, pt, qt)}, {.scalar = z});
}

// Mean squared difference between the raw logits of the two heads.
template <typename T>
int coupling_cost(Tape<T>& tape, int logits_a, int logits_b) {
  if (tape.value(logits_a).shape() != tape.value(logits_b).shape())
    throw ShapeError("coupling_cost: logit shapes differ: " +
                     tape.value(logits_a).shape().str() + " vs " +
                     tape.value(logits_b).shape().str());
  const int d = tape.apply(PrimOp::Sub, {logits_a, logits_b});
  return tape.apply(PrimOp::MeanAll, {tape.apply(PrimOp::Mul, {d, d})});
}

// Row-masked consistency, averaged over the masked rows only; temporal
// ensembling uses it to skip examples without a stored target. An all-ones
// mask reproduces the plain builders.
template <typename T>
int consistency_cost_masked(Tape<T>& tape, ConsistencyKind kind, double tau, int p, int q,
                            const std::vector<std::uint8_t>& row_mask) {
  const Tensor<T>& pv = tape.value(p);
  detail::check_simplex_rows(pv, "consistency_cost_masked");
  detail::check_simplex_rows(tape.value(q), "consistency_cost_masked");
  const std::size_t batch = pv.shape()[0], n = pv.shape()[1];
  if (row_mask.size() != batch)
    throw ShapeError("consistency_cost_masked: mask length " + std::to_string(row_mask.size()) +
                     " != batch " + std::to_string(batch));
  std::size_t valid = 0;
  std::vector<T> maskm(batch * n, T(0));
  for (std::size_t r = 0; r < batch; ++r)
    if (row_mask[r]) {
      ++valid;
      for (std::size_t j = 0; j < n; ++j) maskm[r * n + j] = T(1);
    }
  if (valid == 0) return tape.constant(Tensor<T>::scalar(T(0)));
  const int mask_id = tape.constant(Tensor<T>::from_vec(pv.shape(), std::move(maskm)));

  switch (kind) {
    case ConsistencyKind::Mse: {
      const int d = tape.apply(PrimOp::Sub, {p, q});
      const int md = tape.apply(PrimOp::Mul, {d, mask_id});
      return tape.apply(PrimOp::Scale, {tape.apply(PrimOp::SumAll, {tape.apply(PrimOp::Mul, {md, md})})},
                        {.scalar = 1.0 / static_cast<double>(valid * n)});
    }
    case ConsistencyKind::Kl: {
      const PrimAttrs clamp{.scalar = kLogFloor};
      const int lp = tape.apply(PrimOp::Log, {tape.apply(PrimOp::ClampMin, {p}, clamp)});
      const int lq = tape.apply(PrimOp::Log, {tape.apply(PrimOp::ClampMin, {q}, clamp)});
      const int terms = tape.apply(PrimOp::Mul, {p, tape.apply(PrimOp::Sub, {lp, lq})});
      const int masked = tape.apply(PrimOp::Mul, {terms, mask_id});
      return tape.apply(PrimOp::Scale, {tape.apply(PrimOp::SumAll, {masked})},
                        {.scalar = 1.0 / static_cast<double>(valid)});
    }
    case ConsistencyKind::CTau: {
      if (!(tau > 0.0) || tau > 1.0)
        throw ValueError("consistency_cost_masked: tau must lie in (0,1]");
      const double z = 2.0 / (static_cast<double>(n) * static_cast<double>(n) * tau * tau);
      const int uniform = tape.constant(
          Tensor<T>::full(Shape{n}, static_cast<T>((1.0 - tau) / static_cast<double>(n))));
      const PrimAttrs by_tau{.scalar = tau};
      const int pt =
          tape.apply(PrimOp::AddChannel, {tape.apply(PrimOp::Scale, {p}, by_tau), uniform});
      const int qt =
          tape.apply(PrimOp::AddChannel, {tape.apply(PrimOp::Scale, {q}, by_tau), uniform});
      const PrimAttrs clamp{.scalar = kLogFloor};
      const int lp = tape.apply(PrimOp::Log, {tape.apply(PrimOp::ClampMin, {pt}, clamp)});
      const int lq = tape.apply(PrimOp::Log, {tape.apply(PrimOp::ClampMin, {qt}, clamp)});
      const int terms = tape.apply(PrimOp::Mul, {pt, tape.apply(PrimOp::Sub, {lp, lq})});
      const int masked = tape.apply(PrimOp::Mul, {terms, mask_id});
      return tape.apply(PrimOp::Scale, {tape.apply(PrimOp::SumAll, {masked})},
                        {.scalar = z / static_cast<double>(valid)});
    }
  }
  throw ValueError("consistency_cost_masked: unknown kind");
}

// Value-only wrappers for callers without a live tape.

template <typename T>
double classification_cost_value(const Tensor<T>& probs, const std::vector<int>& labels,
                                 const std::vector<std::uint8_t>& mask) {
  Tape<T> t;
  return static_cast<double>(t.value(classification_cost(t, t.constant(probs), labels, mask)).item());
}

template <typename T>
double consistency_mse_value(const Tensor<T>& p, const Tensor<T>& q) {
  Tape<T> t;
  return static_cast<double>(t.value(consistency_mse(t, t.constant(p), t.constant(q))).item());
}

template <typename T>
double consistency_kl_value(const Tensor<T>& p, const Tensor<T>& q) {
  Tape<T> t;
  return static_cast<double>(t.value(consistency_kl(t, t.constant(p), t.constant(q))).item());
}

template <typename T>
double consistency_c_tau_value(const Tensor<T>& p, const Tensor<T>& q, double tau) {
  Tape<T> t;
  return static_cast<double>(
      t.value(consistency_c_tau(t, t.constant(p), t.constant(q), tau)).item());
}

template <typename T>
double coupling_cost_value(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T> t;
  return static_cast<double>(t.value(coupling_cost(t, t.constant(a), t.constant(b))).item());
}

}  // namespace semisup::objectives
