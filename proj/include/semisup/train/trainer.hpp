#pragma once

#include "semisup/data/augment.hpp"
#include "semisup/data/sampler.hpp"
#include "semisup/nn/forward.hpp"
#include "semisup/objectives/costs.hpp"
#include "semisup/objectives/schedules.hpp"
#include "semisup/train/adam.hpp"
#include "semisup/train/ema.hpp"
#include "semisup/train/temporal.hpp"

namespace semisup::train {

enum class Algorithm { Supervised, Pi, MeanTeacher, TemporalEnsembling };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

// Everything one training step needs; the experiment config resolves into
// this (plus the model spec and sampler held by the caller).
struct TrainConfig {
  Algorithm algorithm = Algorithm::MeanTeacher;

  objectives::ConsistencyConfig consistency;  // kind, tau, max_weight, ramp-up
  double coupling_weight = 0.0;               // dual-head logit MSE weight
  double class_weight = 1.0;                  // expected labeled examples per minibatch

  double lr = 0.003;
  double beta1 = 0.9;
  double adam_eps = 1e-8;
  double beta2_before = 0.999, beta2_after = 0.999;
  double ema_before = 0.999, ema_after = 0.999;
  std::uint64_t phase_switch_step = 40000;

  std::uint64_t lr_rampup_steps = 40000;
  bool rampdown = false;  // learning rate and beta1 only
  std::uint64_t rampdown_start = 0;
  std::uint64_t total_steps = 0;
  double beta1_rampdown_floor = 0.5;
  std::uint64_t cosine_horizon = 0;  // 0 = off; else lr cosine annealing

  nn::NoiseConfig student_noise;
  nn::NoiseConfig teacher_noise;
  data::AugmentConfig augment;  // applied only to rank-4 image batches
  bool pi_share_augment = false;

  double te_decay = 0.6;
  double bn_decay = 0.999;  // running-mean EMA decay for mean-only batch norm
};

// Scheduled values at one step; exposed for logging.
struct StepSchedules {
  double lr = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double ema_decay = 0.0;
  double consistency_weight = 0.0;
};

inline StepSchedules resolve_schedules(const TrainConfig& cfg, std::uint64_t step) {
  namespace obj = objectives;
  StepSchedules s;
  const double up = obj::rampup_sigmoid(step, cfg.lr_rampup_steps);
  const double down = cfg.rampdown
                          ? obj::rampdown_sigmoid(step, cfg.rampdown_start, cfg.total_steps)
                          : 1.0;
  s.lr = cfg.lr * up * down;
  if (cfg.cosine_horizon > 0) s.lr = obj::cosine_anneal(step, cfg.cosine_horizon, cfg.lr * up);
  s.beta1 = cfg.rampdown
                ? cfg.beta1_rampdown_floor + (cfg.beta1 - cfg.beta1_rampdown_floor) * down
                : cfg.beta1;
  s.beta2 = obj::two_phase(step, cfg.phase_switch_step, cfg.beta2_before, cfg.beta2_after);
  s.ema_decay = obj::two_phase(step, cfg.phase_switch_step, cfg.ema_before, cfg.ema_after);
  s.consistency_weight =
      cfg.consistency.max_weight * obj::rampup_sigmoid(step, cfg.consistency.rampup_steps);
  return s;
}

template <typename T>
struct TrainerState {
  nn::ModelSpec spec;
  nn::WeightSet<T> student;
  EMAState<T> ema;
  OptimizerState<T> opt;
  TemporalEnsembleStore<T> te;
  Algorithm algorithm = Algorithm::MeanTeacher;
  std::uint64_t step = 0;
};

// Builds a trainer with the teacher initialized as a copy of the student.
template <typename T>
TrainerState<T> make_trainer(const nn::ModelSpec& spec, Algorithm algorithm,
                             nn::WeightSet<T> init, std::size_t primary_examples,
                             double te_decay) {
  TrainerState<T> s;
  s.spec = spec;
  s.student = std::move(init);
  s.ema.teacher = s.student;
  s.opt = OptimizerState<T>::zeros_like(s.student);
  s.algorithm = algorithm;
  if (algorithm == Algorithm::TemporalEnsembling)
    s.te = TemporalEnsembleStore<T>(primary_examples, spec.class_count(), te_decay);
  return s;
}

namespace detail {

template <typename T>
Tensor<T> augment_batch(const Tensor<T>& inputs, const data::AugmentConfig& cfg,
                        RandomSource stream) {
  if (inputs.shape().rank() != 4) return inputs;  // flat features: nothing to augment
  if (cfg.translate_max == 0 && !cfg.flip) return inputs;
  const std::size_t b = inputs.shape()[0];
  const Shape img_shape{inputs.shape()[1], inputs.shape()[2], inputs.shape()[3]};
  const std::size_t stride = img_shape.numel();
  std::vector<T> out(inputs.size());
  for (std::size_t r = 0; r < b; ++r) {
    std::vector<T> row(inputs.data() + r * stride, inputs.data() + (r + 1) * stride);
    auto img = Tensor<T>::from_vec(img_shape, std::move(row));
    auto aug = data::augment(img, cfg, stream);
    for (std::size_t j = 0; j < stride; ++j) out[r * stride + j] = aug[j];
  }
  return Tensor<T>::from_vec(inputs.shape(), std::move(out));
}

// Folds leaf-id-keyed gradients into name-keyed gradients (branches of the
// Pi model surface the same parameter under several leaves); parameters the
// loss does not reach get zero gradients.
template <typename T>
std::map<std::string, Tensor<T>> fold_gradients(
    const nn::WeightSet<T>& weights, const Tape<T>& tape,
    const std::unordered_map<int, Tensor<T>>& grads,
    const std::vector<std::pair<int, std::string>>& weight_leaves) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [leaf, name] : weight_leaves) {
    auto git = grads.find(leaf);
    if (git == grads.end()) continue;
    auto oit = out.find(name);
    if (oit == out.end()) {
      out.emplace(name, git->second);
    } else {
      std::vector<T> sum = oit->second.to_vector();
      kernels::acc(sum.data(), git->second.data(), sum.size());
      oit->second = Tensor<T>::from_vec(git->second.shape(), std::move(sum));
    }
  }
  for (const auto& [name, t] : weights.trainable)
    if (!out.count(name)) out.emplace(name, Tensor<T>::zeros(t.shape()));
  (void)tape;
  return out;
}

}  // namespace detail

// One optimization step of the configured algorithm. Student forward records
// the tape; the consistency target comes from a second noisy branch (Pi,
// gradients through both), the EMA teacher (constant target), or the
// per-example prediction store (temporal ensembling). After the gradient
// step the teacher tracks the student by EMA.
template <typename T>
objectives::CostBreakdown train_step(TrainerState<T>& state, const data::Batch<T>& batch,
                                     const TrainConfig& cfg, const RandomSource& rng) {
  namespace obj = objectives;
  const std::uint64_t step = state.step;
  const StepSchedules sched = resolve_schedules(cfg, step);
  const bool dual = state.spec.head_count == 2;
  const std::size_t cons_head = dual ? 1 : 0;
  const bool want_consistency =
      state.algorithm != Algorithm::Supervised && sched.consistency_weight > 0.0;

  Tape<T> tape;

  // student branch
  Tensor<T> student_inputs =
      cfg.student_noise.augment
          ? detail::augment_batch(batch.inputs, cfg.augment, rng.substream("augment.student", step))
          : batch.inputs;
  nn::ForwardOptions sopts;
  sopts.trainable = true;
  sopts.collect_stat_updates = true;
  sopts.bn_decay = cfg.bn_decay;
  sopts.side = "student";
  sopts.step = step;
  auto student = nn::forward(state.spec, state.student, student_inputs, cfg.student_noise, rng,
                             tape, sopts);

  // consistency target branch
  int target_probs = -1;
  std::vector<std::uint8_t> cons_mask(batch.size(), 1);
  auto weight_leaves = student.weight_leaves;
  if (want_consistency) {
    if (state.algorithm == Algorithm::Pi || state.algorithm == Algorithm::MeanTeacher) {
      Tensor<T> target_inputs;
      if (state.algorithm == Algorithm::Pi && cfg.pi_share_augment)
        target_inputs = student_inputs;
      else
        target_inputs = cfg.teacher_noise.augment
                            ? detail::augment_batch(batch.inputs, cfg.augment,
                                                    rng.substream("augment.teacher", step))
                            : batch.inputs;
      nn::ForwardOptions topts;
      topts.trainable = state.algorithm == Algorithm::Pi;  // gradients through both Pi branches
      topts.collect_stat_updates = false;
      topts.side = "teacher";
      topts.step = step;
      const nn::WeightSet<T>& target_weights =
          state.algorithm == Algorithm::Pi ? state.student : state.ema.teacher;
      auto branch = nn::forward(state.spec, target_weights, target_inputs, cfg.teacher_noise,
                                rng, tape, topts);
      target_probs = branch.probs[cons_head];
      if (state.algorithm == Algorithm::Pi)
        weight_leaves.insert(weight_leaves.end(), branch.weight_leaves.begin(),
                             branch.weight_leaves.end());
    } else {  // TemporalEnsembling
      const std::size_t n = state.spec.class_count();
      std::vector<T> targets(batch.size() * n, T(0));
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const std::int64_t id = batch.example_ids[r];
        if (id < 0)
          throw ConfigError(
              "temporal ensembling needs a stable example identity for every row; "
              "streamed extra-pool data has none");
        if (!state.te.has_target(id)) {
          cons_mask[r] = 0;  // no stored prediction yet: skip this example
          for (std::size_t c = 0; c < n; ++c)
            targets[r * n + c] = T(1) / static_cast<T>(n);  // placeholder, masked out
          continue;
        }
        auto t = state.te.target(id);
        for (std::size_t c = 0; c < n; ++c) targets[r * n + c] = t[c];
      }
      target_probs =
          tape.constant(Tensor<T>::from_vec(Shape{batch.size(), n}, std::move(targets)));
    }
  }

  // cost composition
  obj::CostBreakdown cb;
  cb.class_weight = cfg.class_weight;
  cb.consistency_weight = sched.consistency_weight;
  cb.coupling_weight = dual ? cfg.coupling_weight : 0.0;

  const int class_id =
      obj::classification_cost(tape, student.probs[0], batch.labels, batch.labeled_mask);
  int total_id = tape.apply(PrimOp::Scale, {class_id}, {.scalar = cb.class_weight});
  cb.classification = static_cast<double>(tape.value(class_id).item());

  if (want_consistency) {
    const int cons_id = obj::consistency_cost_masked(tape, cfg.consistency.kind,
                                                     cfg.consistency.tau, target_probs,
                                                     student.probs[cons_head], cons_mask);
    cb.consistency_raw = static_cast<double>(tape.value(cons_id).item());
    total_id = tape.apply(
        PrimOp::Add,
        {total_id, tape.apply(PrimOp::Scale, {cons_id}, {.scalar = cb.consistency_weight})});
  }
  if (dual && cfg.coupling_weight > 0.0) {
    const int coup_id = obj::coupling_cost(tape, student.logits[0], student.logits[1]);
    cb.coupling = static_cast<double>(tape.value(coup_id).item());
    total_id = tape.apply(
        PrimOp::Add,
        {total_id, tape.apply(PrimOp::Scale, {coup_id}, {.scalar = cb.coupling_weight})});
  }
  cb.total = static_cast<double>(tape.value(total_id).item());

  // gradient step on the student only
  auto grads = detail::fold_gradients(state.student, tape, tape.backward(total_id),
                                      weight_leaves);
  adam_step(state.opt, state.student,
            grads, AdamParams{sched.lr, sched.beta1, sched.beta2, cfg.adam_eps});
  nn::apply_stat_updates(state.student, student);

  // teacher follows by EMA (kept for evaluation under every algorithm)
  ema_update(state.ema, state.student, sched.ema_decay);

  // temporal store: one update per example per pass, after targets were read
  if (state.algorithm == Algorithm::TemporalEnsembling) {
    const Tensor<T>& probs = tape.value(student.probs[cons_head]);
    const std::size_t n = state.spec.class_count();
    for (std::size_t r = 0; r < batch.size(); ++r) {
      if (batch.example_ids[r] < 0)
        throw ConfigError("temporal ensembling cannot track streamed extra-pool rows");
      state.te.update(batch.example_ids[r], probs.data() + r * n);
    }
  }

  ++state.step;
  return cb;
}

struct EvalResult {
  double error_rate = 0.0;
  double mean_cost = 0.0;
};

// Deterministic evaluation-mode error rate (argmax, lowest class index wins
// ties) and mean cross-entropy. The caller picks student or teacher weights.
template <typename T>
EvalResult evaluate(const nn::ModelSpec& spec, const nn::WeightSet<T>& weights,
                    const data::Dataset& ds, std::size_t batch_size = 256) {
  if (!ds.labeled()) throw ValueError("evaluate: dataset has no labels");
  ds.validate();
  const std::size_t n = ds.size();
  std::size_t wrong = 0;
  double cost = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    std::vector<std::size_t> rows(stop - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    auto inputs = data::gather_rows<T>(ds.examples, rows);
    auto probs = nn::predict(spec, weights, inputs);
    const std::size_t classes = probs.shape()[1];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::size_t arg = 0;
      T best = probs[r * classes];
      for (std::size_t c = 1; c < classes; ++c)
        if (probs[r * classes + c] > best) {  // strict: ties keep the lowest index
          best = probs[r * classes + c];
          arg = c;
        }
      const auto truth = static_cast<std::size_t>(ds.labels[start + r]);
      if (arg != truth) ++wrong;
      const double p = std::max(static_cast<double>(probs[r * classes + truth]),
                                objectives::kLogFloor);
      cost -= std::log(p);
    }
  }
  EvalResult res;
  res.error_rate = static_cast<double>(wrong) / static_cast<double>(n);
  res.mean_cost = cost / static_cast<double>(n);
  return res;
}

}  // namespace semisup::train
