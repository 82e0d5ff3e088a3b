#pragma once

#include <vector>

#include "semisup/tensor/random.hpp"
#include "semisup/tensor/tensor.hpp"

namespace semisup::data {

// Examples are [n, feature dims...] in double; labels, when present, lie in
// [0, class_count).
struct Dataset {
  Tensor<double> examples;
  std::vector<int> labels;
  std::size_t class_count = 0;

  std::size_t size() const { return examples.empty() ? 0 : examples.shape()[0]; }
  bool labeled() const { return !labels.empty(); }

  Shape feature_shape() const {
    std::vector<std::size_t> dims;
    for (std::size_t d = 1; d < examples.shape().rank(); ++d)
      dims.push_back(examples.shape()[d]);
    return Shape(dims);
  }

  std::size_t feature_size() const { return feature_shape().numel(); }

  void validate() const {
    if (labeled()) {
      if (labels.size() != size())
        throw ValueError("dataset: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(size()) + " examples");
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count)
          throw ValueError("dataset: label " + std::to_string(labels[i]) + " at index " +
                           std::to_string(i) + " outside [0," + std::to_string(class_count) +
                           ")");
    }
  }
};

// Label-removal result: labeled indices hold an equal count per class, the
// rest of the primary set is unlabeled, and an optional extra pool of
// label-free examples can be streamed alongside.
struct SemiSupervisedSplit {
  Dataset primary;
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  Dataset extra;
};

// Keeps `keep_per_class` labeled examples of every class, chosen by the seeded
// source; everything else becomes unlabeled.
inline SemiSupervisedSplit remove_labels(const Dataset& ds, std::size_t keep_per_class,
                                         const RandomSource& src) {
  ds.validate();
  if (!ds.labeled()) throw ValueError("remove_labels: dataset has no labels");
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  SemiSupervisedSplit split;
  split.primary = ds;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < keep_per_class)
      throw ValueError("remove_labels: class " + std::to_string(c) + " has only " +
                       std::to_string(by_class[c].size()) + " members, need " +
                       std::to_string(keep_per_class));
    auto stream = src.substream("remove_labels.class" + std::to_string(c));
    stream.shuffle(by_class[c]);
    for (std::size_t i = 0; i < by_class[c].size(); ++i)
      (i < keep_per_class ? split.labeled : split.unlabeled).push_back(by_class[c][i]);
  }
  std::sort(split.labeled.begin(), split.labeled.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  return split;
}

// Copies selected rows into a new examples tensor.
template <typename T>
Tensor<T> gather_rows(const Tensor<double>& examples, const std::vector<std::size_t>& rows) {
  const std::size_t stride = examples.size() / examples.shape()[0];
  std::vector<std::size_t> dims{rows.size()};
  for (std::size_t d = 1; d < examples.shape().rank(); ++d) dims.push_back(examples.shape()[d]);
  std::vector<T> out(rows.size() * stride);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* srcp = examples.data() + rows[r] * stride;
    for (std::size_t j = 0; j < stride; ++j)
      out[r * stride + j] = static_cast<T>(srcp[j]);
  }
  return Tensor<T>::from_vec(Shape(dims), std::move(out));
}

}  // namespace semisup::data
