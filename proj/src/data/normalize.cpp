#include "semisup/data/normalize.hpp"

#include <cmath>

#include "semisup/kernels/kernels.hpp"

namespace semisup::data {

NormalizeResult standardize(const Dataset& ds) {
  if (ds.size() == 0) throw ValueError("standardize: empty dataset");
  const Shape feat = ds.feature_shape();
  const std::size_t c = feat[feat.rank() - 1];
  const std::size_t rows = ds.examples.size() / c;

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  const double* x = ds.examples.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[r * c + ch];
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[r * c + ch] - mean[ch];
      var[ch] += d * d;
    }
  std::vector<double> stdev(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    stdev[ch] = std::sqrt(var[ch] / static_cast<double>(rows));
    if (stdev[ch] == 0.0)
      throw ValueError("standardize: channel " + std::to_string(ch) + " has zero variance");
  }

  NormalizeResult res;
  res.record.kind = TransformRecord::Kind::Standardize;
  res.record.mean = Tensor<double>::from_vec(Shape{c}, std::vector<double>(mean));
  res.record.scale = Tensor<double>::from_vec(Shape{c}, std::vector<double>(stdev));
  res.data = apply_transform(res.record, ds);
  return res;
}

void symmetric_eigen(const Tensor<double>& a, std::vector<double>& values, Tensor<double>& q) {
  const std::size_t n = a.shape()[0];
  if (a.shape().rank() != 2 || a.shape()[1] != n)
    throw ShapeError("symmetric_eigen: matrix must be square, got " + a.shape().str());
  std::vector<double> m = a.to_vector();
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_norm = [&]() {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += m[i * n + j] * m[i * n + j];
    return std::sqrt(2.0 * s);
  };

  const double tol = 1e-14 * std::max(1.0, off_norm());
  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t qq = p + 1; qq < n; ++qq) {
        const double apq = m[p * n + qq];
        if (std::abs(apq) < 1e-300) continue;
        const double app = m[p * n + p];
        const double aqq = m[qq * n + qq];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cth = 1.0 / std::sqrt(t * t + 1.0);
        const double sth = t * cth;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m[k * n + p];
          const double mkq = m[k * n + qq];
          m[k * n + p] = cth * mkp - sth * mkq;
          m[k * n + qq] = sth * mkp + cth * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m[p * n + k];
          const double mqk = m[qq * n + k];
          m[p * n + k] = cth * mpk - sth * mqk;
          m[qq * n + k] = sth * mpk + cth * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + qq];
          v[k * n + p] = cth * vkp - sth * vkq;
          v[k * n + qq] = sth * vkp + cth * vkq;
        }
      }
    }
  }

  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = m[i * n + i];
  q = Tensor<double>::from_vec(Shape{n, n}, std::move(v));
}

NormalizeResult zca_whiten(const Dataset& ds, double epsilon) {
  if (epsilon <= 0.0) throw ValueError("zca_whiten: epsilon must be > 0");
  if (ds.size() == 0) throw ValueError("zca_whiten: empty dataset");
  const std::size_t n = ds.size();
  const std::size_t d = ds.feature_size();
  const double* x = ds.examples.data();

  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[r * d + j];
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<double> centered(n * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) centered[r * d + j] = x[r * d + j] - mean[j];

  std::vector<double> cov(d * d);
  kernels::matmul_tn(centered.data(), centered.data(), cov.data(), n, d, d, false);
  kernels::scale(cov.data(), 1.0 / static_cast<double>(n), cov.data(), cov.size());

  std::vector<double> lambda;
  Tensor<double> q;
  symmetric_eigen(Tensor<double>::from_vec(Shape{d, d}, std::move(cov)), lambda, q);

  // T = Q diag(1/sqrt(lambda+eps)) Q^T, assembled symmetric
  std::vector<double> scaled(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    const double inv = 1.0 / std::sqrt(std::max(lambda[i], 0.0) + epsilon);
    for (std::size_t r = 0; r < d; ++r) scaled[r * d + i] = q[r * d + i] * inv;
  }
  std::vector<double> t(d * d);
  kernels::matmul_nt(scaled.data(), q.to_vector().data(), t.data(), d, d, d, false);
  // enforce exact symmetry against rounding drift
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (t[i * d + j] + t[j * d + i]);
      t[i * d + j] = avg;
      t[j * d + i] = avg;
    }

  NormalizeResult res;
  res.record.kind = TransformRecord::Kind::Zca;
  res.record.mean = Tensor<double>::from_vec(Shape{d}, std::move(mean));
  res.record.scale = Tensor<double>::from_vec(Shape{d, d}, std::move(t));
  res.data = apply_transform(res.record, ds);
  return res;
}

Dataset apply_transform(const TransformRecord& record, const Dataset& ds) {
  Dataset out = ds;
  if (record.kind == TransformRecord::Kind::Identity || ds.size() == 0) return out;
  const std::size_t n = ds.size();
  const double* x = ds.examples.data();

  if (record.kind == TransformRecord::Kind::Standardize) {
    const std::size_t c = record.mean.shape()[0];
    const Shape feat = ds.feature_shape();
    if (feat[feat.rank() - 1] != c)
      throw ShapeError("apply_transform: channel count mismatch");
    const std::size_t rows = ds.examples.size() / c;
    std::vector<double> y(ds.examples.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t ch = 0; ch < c; ++ch)
        y[r * c + ch] = (x[r * c + ch] - record.mean[ch]) / record.scale[ch];
    out.examples = Tensor<double>::from_vec(ds.examples.shape(), std::move(y));
    return out;
  }

  // ZCA
  const std::size_t d = record.mean.shape()[0];
  if (ds.feature_size() != d)
    throw ShapeError("apply_transform: feature size mismatch (" + std::to_string(d) + " vs " +
                     std::to_string(ds.feature_size()) + ")");
  std::vector<double> centered(n * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) centered[r * d + j] = x[r * d + j] - record.mean[j];
  std::vector<double> y(n * d);
  kernels::matmul_nn(centered.data(), record.scale.data(), y.data(), n, d, d, false);
  out.examples = Tensor<double>::from_vec(ds.examples.shape(), std::move(y));
  return out;
}

}  // namespace semisup::data
