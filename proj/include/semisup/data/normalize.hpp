#pragma once

#include "semisup/data/dataset.hpp"

namespace semisup::data {

// Reapplicable input transform fitted on training statistics.
struct TransformRecord {
  enum class Kind { Identity, Standardize, Zca };
  Kind kind = Kind::Identity;
  Tensor<double> mean;   // [c] (standardize) or [d] (zca)
  Tensor<double> scale;  // [c] stdevs, or the symmetric [d,d] whitening matrix
};

struct NormalizeResult {
  Dataset data;
  TransformRecord record;
};

// Channel-wise zero mean / unit variance over the training set. Errors on a
// zero-variance channel.
NormalizeResult standardize(const Dataset& ds);

// ZCA whitening: T = Q diag(1/sqrt(lambda + epsilon)) Q^T from the symmetric
// eigendecomposition of the feature covariance; output = (x - mean) T. The
// transform is symmetric (stays close to the input basis) and reapplicable.
NormalizeResult zca_whiten(const Dataset& ds, double epsilon);

Dataset apply_transform(const TransformRecord& record, const Dataset& ds);

// Cyclic Jacobi eigendecomposition of a symmetric matrix: fills eigenvalues
// and the column eigenvector matrix Q with A = Q diag(values) Q^T.
void symmetric_eigen(const Tensor<double>& a, std::vector<double>& values, Tensor<double>& q);

}  // namespace semisup::data
