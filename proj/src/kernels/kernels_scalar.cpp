#include "semisup/kernels/kernels.hpp"

#include <cmath>

// Reference kernels. Plain sequential loops; the AVX2 variants are checked
// against these. Reductions accumulate left to right.

namespace semisup::kernels::scalar {

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(const T* a, T c, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

template <typename T>
void acc(T* out, const T* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i];
}

template <typename T>
void lerp(const T* a, const T* b, T alpha, T* out, std::size_t n) {
  const T q = T(1) - alpha;
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * a[i] + q * b[i];
}

template <typename T>
void leaky_relu(const T* x, T slope, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] >= T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_relu_grad(const T* x, const T* g, T slope, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] >= T(0) ? g[i] : slope * g[i];
}

template <typename T>
void clamp_min(const T* x, T floor, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < floor ? floor : x[i];
}

template <typename T>
T reduce_sum(const T* x, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

template <typename T>
T reduce_max(const T* x, std::size_t n) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
bool all_finite(const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      T s = dot(arow, b + j * n, n);
      c[i * k + j] = accumulate ? c[i * k + j] + s : s;
    }
  }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < k * n; ++i) c[i] = T(0);
  for (std::size_t r = 0; r < m; ++r) {
    const T* arow = a + r * k;
    const T* brow = b + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void adam_update(T* w, T* m, T* v, const T* g, std::size_t n, T lr, T beta1, T beta2,
                 T eps, T bias1, T bias2) {
  const T q1 = T(1) - beta1;
  const T q2 = T(1) - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + q1 * g[i];
    v[i] = beta2 * v[i] + q2 * (g[i] * g[i]);
    const T mhat = m[i] * bias1;
    const T vhat = v[i] * bias2;
    w[i] = w[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

#define SEMISUP_INSTANTIATE(T)                                                        \
  template void add<T>(const T*, const T*, T*, std::size_t);                          \
  template void sub<T>(const T*, const T*, T*, std::size_t);                          \
  template void mul<T>(const T*, const T*, T*, std::size_t);                          \
  template void scale<T>(const T*, T, T*, std::size_t);                               \
  template void acc<T>(T*, const T*, std::size_t);                                    \
  template void lerp<T>(const T*, const T*, T, T*, std::size_t);                      \
  template void leaky_relu<T>(const T*, T, T*, std::size_t);                          \
  template void leaky_relu_grad<T>(const T*, const T*, T, T*, std::size_t);           \
  template void clamp_min<T>(const T*, T, T*, std::size_t);                           \
  template T reduce_sum<T>(const T*, std::size_t);                                    \
  template T reduce_max<T>(const T*, std::size_t);                                    \
  template T dot<T>(const T*, const T*, std::size_t);                                 \
  template bool all_finite<T>(const T*, std::size_t);                                 \
  template void matmul_nn<T>(const T*, const T*, T*, std::size_t, std::size_t,        \
                             std::size_t, bool);                                      \
  template void matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t,        \
                             std::size_t, bool);                                      \
  template void matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t,        \
                             std::size_t, bool);                                      \
  template void adam_update<T>(T*, T*, T*, const T*, std::size_t, T, T, T, T, T, T);

SEMISUP_INSTANTIATE(float)
SEMISUP_INSTANTIATE(double)
#undef SEMISUP_INSTANTIATE

}  // namespace semisup::kernels::scalar
