#pragma once

#include <cstdint>

#include "semisup/data/dataset.hpp"

namespace semisup::data {

// One training minibatch. labels[i] is -1 and labeled_mask[i] is 0 for rows
// sampled from the unlabeled stream, regardless of what the primary dataset
// knows. example_ids index the primary dataset; extra-pool rows carry -1.
template <typename T>
struct Batch {
  Tensor<T> inputs;
  std::vector<int> labels;
  std::vector<std::uint8_t> labeled_mask;
  std::vector<std::int64_t> example_ids;

  std::size_t size() const { return labels.size(); }
  std::size_t labeled_count() const {
    std::size_t n = 0;
    for (auto m : labeled_mask) n += m;
    return n;
  }
};

// Shuffled-cursor stream: every element is visited exactly once per pass, and
// the stream reshuffles (keyed by pass index) when exhausted.
class IndexStream {
 public:
  IndexStream() = default;
  IndexStream(std::string name, std::vector<std::size_t> base, const RandomSource& root)
      : name_(std::move(name)), base_(std::move(base)), root_(root.substream("sampler." + name_)) {
    reshuffle();
  }

  bool empty() const { return base_.empty(); }
  std::size_t size() const { return base_.size(); }
  std::uint64_t pass() const { return pass_; }
  std::size_t cursor() const { return cursor_; }

  std::size_t next(bool reuse) {
    if (base_.empty()) throw ValueError("sampler: stream '" + name_ + "' is empty");
    if (cursor_ >= order_.size()) {
      if (!reuse)
        throw ValueError("sampler: stream '" + name_ + "' exhausted with reuse disabled");
      ++pass_;
      reshuffle();
    }
    return order_[cursor_++];
  }

  // checkpoint support: replay to an exact (pass, cursor) position
  void restore(std::uint64_t pass, std::size_t cursor) {
    pass_ = pass;
    reshuffle();
    cursor_ = cursor;
  }

 private:
  void reshuffle() {
    order_ = base_;
    auto stream = root_.substream("pass", pass_);
    stream.shuffle(order_);
    cursor_ = 0;
  }

  std::string name_;
  std::vector<std::size_t> base_;
  RandomSource root_{0};
  std::vector<std::size_t> order_;
  std::uint64_t pass_ = 0;
  std::size_t cursor_ = 0;
};

// Labeled/unlabeled quota sampler with reuse-shuffle semantics, plus a mixed
// mode where all examples stream together and the labeled count varies from
// batch to batch. The extra pool is merged into the unlabeled stream
// (uniformly, by index offset past the primary set).
class SamplerState {
 public:
  SamplerState() = default;

  SamplerState(SemiSupervisedSplit split, const RandomSource& root, bool reuse = true)
      : split_(std::move(split)), reuse_(reuse) {
    const std::size_t np = split_.primary.size();
    labeled_flag_.assign(np, 0);
    for (auto i : split_.labeled) labeled_flag_[i] = 1;

    std::vector<std::size_t> unlab = split_.unlabeled;
    for (std::size_t j = 0; j < split_.extra.size(); ++j) unlab.push_back(np + j);
    std::vector<std::size_t> mixed = split_.labeled;
    mixed.insert(mixed.end(), unlab.begin(), unlab.end());

    labeled_stream_ = IndexStream("labeled", split_.labeled, root);
    unlabeled_stream_ = IndexStream("unlabeled", std::move(unlab), root);
    mixed_stream_ = IndexStream("mixed", std::move(mixed), root);
  }

  const SemiSupervisedSplit& split() const { return split_; }

  // Quota mode: exactly k_labeled labeled rows then k_unlabeled unlabeled rows.
  template <typename T>
  Batch<T> sample(std::size_t k_labeled, std::size_t k_unlabeled) {
    if (k_labeled + k_unlabeled == 0)
      throw ValueError("sampler: batch quotas must not both be zero");
    if (k_labeled > 0 && labeled_stream_.empty())
      throw ValueError("sampler: no labeled examples for quota " + std::to_string(k_labeled));
    if (k_unlabeled > 0 && unlabeled_stream_.empty())
      throw ValueError("sampler: no unlabeled examples for quota " +
                       std::to_string(k_unlabeled));
    if (!reuse_ && (k_labeled > labeled_stream_.size() || k_unlabeled > unlabeled_stream_.size()))
      throw ValueError("sampler: quota exceeds pool with reuse disabled");
    std::vector<std::size_t> rows;
    rows.reserve(k_labeled + k_unlabeled);
    for (std::size_t i = 0; i < k_labeled; ++i) rows.push_back(labeled_stream_.next(reuse_));
    for (std::size_t i = 0; i < k_unlabeled; ++i) rows.push_back(unlabeled_stream_.next(reuse_));
    return assemble<T>(rows, /*labeled_prefix=*/k_labeled, /*mask_by_flag=*/false);
  }

  // Mixed mode: a uniformly shuffled mixture; rows that happen to come from
  // the labeled set keep their labels.
  template <typename T>
  Batch<T> sample_mixed(std::size_t batch_size) {
    if (batch_size == 0) throw ValueError("sampler: batch size must be positive");
    std::vector<std::size_t> rows;
    rows.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) rows.push_back(mixed_stream_.next(reuse_));
    return assemble<T>(rows, 0, /*mask_by_flag=*/true);
  }

  const IndexStream& labeled_stream() const { return labeled_stream_; }
  const IndexStream& unlabeled_stream() const { return unlabeled_stream_; }
  IndexStream& labeled_stream() { return labeled_stream_; }
  IndexStream& unlabeled_stream() { return unlabeled_stream_; }
  IndexStream& mixed_stream() { return mixed_stream_; }

 private:
  template <typename T>
  Batch<T> assemble(const std::vector<std::size_t>& rows, std::size_t labeled_prefix,
                    bool mask_by_flag) {
    const std::size_t np = split_.primary.size();
    const std::size_t feat = split_.primary.feature_size();
    std::vector<std::size_t> dims{rows.size()};
    for (std::size_t d = 1; d < split_.primary.examples.shape().rank(); ++d)
      dims.push_back(split_.primary.examples.shape()[d]);

    std::vector<T> values(rows.size() * feat);
    Batch<T> batch;
    batch.labels.resize(rows.size(), -1);
    batch.labeled_mask.resize(rows.size(), 0);
    batch.example_ids.resize(rows.size(), -1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t idx = rows[r];
      const double* src = idx < np ? split_.primary.examples.data() + idx * feat
                                   : split_.extra.examples.data() + (idx - np) * feat;
      for (std::size_t j = 0; j < feat; ++j) values[r * feat + j] = static_cast<T>(src[j]);
      const bool is_labeled_row =
          mask_by_flag ? (idx < np && labeled_flag_[idx]) : r < labeled_prefix;
      if (idx < np) batch.example_ids[r] = static_cast<std::int64_t>(idx);
      if (is_labeled_row) {
        batch.labels[r] = split_.primary.labels[idx];
        batch.labeled_mask[r] = 1;
      }
    }
    batch.inputs = Tensor<T>::from_vec(Shape(dims), std::move(values));
    return batch;
  }

  SemiSupervisedSplit split_;
  bool reuse_ = true;
  std::vector<std::uint8_t> labeled_flag_;
  IndexStream labeled_stream_;
  IndexStream unlabeled_stream_;
  IndexStream mixed_stream_;
};

}  // namespace semisup::data
