#include "semisup/kernels/kernels.hpp"

#include <cmath>

// AVX2/FMA kernel variants. Elementwise kernels keep the scalar per-element
// operation order (mul + add, never fused) so results are bit-identical to the
// scalar reference; matmuls and reductions use FMA and lane-parallel partial
// accumulators and agree with the reference only to rounding.
//
// When this translation unit is built without AVX2 support the functions fall
// through to the scalar reference and avx2_compiled() reports false.

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define SEMISUP_AVX2_TU 1
#else
#define SEMISUP_AVX2_TU 0
#endif

namespace semisup::kernels::avx2 {

bool avx2_compiled() { return SEMISUP_AVX2_TU != 0; }

#if SEMISUP_AVX2_TU

namespace {

// float <-> __m256 (8 lanes), double <-> __m256d (4 lanes)
struct VecF {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg zero() { return _mm256_setzero_ps(); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_ps(a, b); }
  static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
  static reg select_ge0(reg x, reg a, reg b) {
    // lanes where x >= 0 take a, others take b
    reg mask = _mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_GE_OQ);
    return _mm256_blendv_ps(b, a, mask);
  }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
  }
  static float hmax(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
  }
  static bool lanes_finite(reg v) {
    // x - x == 0 only for finite lanes (Inf/NaN give NaN, which compares false)
    reg d = _mm256_sub_ps(v, v);
    reg ok = _mm256_cmp_ps(d, _mm256_setzero_ps(), _CMP_EQ_OQ);
    return _mm256_movemask_ps(ok) == 0xFF;
  }
};

struct VecD {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg zero() { return _mm256_setzero_pd(); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg max(reg a, reg b) { return _mm256_max_pd(a, b); }
  static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
  static reg select_ge0(reg x, reg a, reg b) {
    reg mask = _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GE_OQ);
    return _mm256_blendv_pd(b, a, mask);
  }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_add_sd(lo, _mm_unpackhi_pd(lo, lo));
    return _mm_cvtsd_f64(lo);
  }
  static double hmax(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    lo = _mm_max_sd(lo, _mm_unpackhi_pd(lo, lo));
    return _mm_cvtsd_f64(lo);
  }
  static bool lanes_finite(reg v) {
    reg d = _mm256_sub_pd(v, v);
    reg ok = _mm256_cmp_pd(d, _mm256_setzero_pd(), _CMP_EQ_OQ);
    return _mm256_movemask_pd(ok) == 0xF;
  }
};

template <typename T> struct VecOf;
template <> struct VecOf<float> { using type = VecF; };
template <> struct VecOf<double> { using type = VecD; };

}  // namespace

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::sub(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(const T* a, T c, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  const auto cv = V::set1(c);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::mul(V::load(a + i), cv));
  for (; i < n; ++i) out[i] = a[i] * c;
}

template <typename T>
void acc(T* out, const T* a, std::size_t n) {
  using V = typename VecOf<T>::type;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::add(V::load(out + i), V::load(a + i)));
  for (; i < n; ++i) out[i] += a[i];
}

template <typename T>
void lerp(const T* a, const T* b, T alpha, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  const T q = T(1) - alpha;
  const auto av = V::set1(alpha);
  const auto qv = V::set1(q);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    V::store(out + i, V::add(V::mul(av, V::load(a + i)), V::mul(qv, V::load(b + i))));
  for (; i < n; ++i) out[i] = alpha * a[i] + q * b[i];
}

template <typename T>
void leaky_relu(const T* x, T slope, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  const auto sv = V::set1(slope);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    auto xv = V::load(x + i);
    V::store(out + i, V::select_ge0(xv, xv, V::mul(sv, xv)));
  }
  for (; i < n; ++i) out[i] = x[i] >= T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_relu_grad(const T* x, const T* g, T slope, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  const auto sv = V::set1(slope);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    auto xv = V::load(x + i);
    auto gv = V::load(g + i);
    V::store(out + i, V::select_ge0(xv, gv, V::mul(sv, gv)));
  }
  for (; i < n; ++i) out[i] = x[i] >= T(0) ? g[i] : slope * g[i];
}

template <typename T>
void clamp_min(const T* x, T floor, T* out, std::size_t n) {
  using V = typename VecOf<T>::type;
  const auto fv = V::set1(floor);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) V::store(out + i, V::max(fv, V::load(x + i)));
  for (; i < n; ++i) out[i] = x[i] < floor ? floor : x[i];
}

template <typename T>
T reduce_sum(const T* x, std::size_t n) {
  using V = typename VecOf<T>::type;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * V::width <= n; i += 2 * V::width) {
    acc0 = V::add(acc0, V::load(x + i));
    acc1 = V::add(acc1, V::load(x + i + V::width));
  }
  for (; i + V::width <= n; i += V::width) acc0 = V::add(acc0, V::load(x + i));
  T s = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

template <typename T>
T reduce_max(const T* x, std::size_t n) {
  using V = typename VecOf<T>::type;
  std::size_t i = 0;
  T m = x[0];
  if (n >= V::width) {
    auto mv = V::load(x);
    i = V::width;
    for (; i + V::width <= n; i += V::width) mv = V::max(mv, V::load(x + i));
    m = V::hmax(mv);
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  using V = typename VecOf<T>::type;
  auto acc0 = V::zero();
  auto acc1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * V::width <= n; i += 2 * V::width) {
    acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    acc1 = V::fmadd(V::load(a + i + V::width), V::load(b + i + V::width), acc1);
  }
  for (; i + V::width <= n; i += V::width) acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
  T s = V::hsum(V::add(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
bool all_finite(const T* x, std::size_t n) {
  using V = typename VecOf<T>::type;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width)
    if (!V::lanes_finite(V::load(x + i))) return false;
  for (; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  using V = typename VecOf<T>::type;
  const std::size_t W = V::width;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate)
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const auto a0 = V::set1(arow[p]);
      const auto a1 = V::set1(arow[p + 1]);
      const auto a2 = V::set1(arow[p + 2]);
      const auto a3 = V::set1(arow[p + 3]);
      const T* b0 = b + p * n;
      const T* b1 = b0 + n;
      const T* b2 = b1 + n;
      const T* b3 = b2 + n;
      std::size_t j = 0;
      for (; j + W <= n; j += W) {
        auto cv = V::load(crow + j);
        cv = V::fmadd(a0, V::load(b0 + j), cv);
        cv = V::fmadd(a1, V::load(b1 + j), cv);
        cv = V::fmadd(a2, V::load(b2 + j), cv);
        cv = V::fmadd(a3, V::load(b3 + j), cv);
        V::store(crow + j, cv);
      }
      for (; j < n; ++j)
        crow[j] += arow[p] * b0[j] + arow[p + 1] * b1[j] + arow[p + 2] * b2[j] +
                   arow[p + 3] * b3[j];
    }
    for (; p < k; ++p) {
      const auto av = V::set1(arow[p]);
      const T* brow = b + p * n;
      std::size_t j = 0;
      for (; j + W <= n; j += W)
        V::store(crow + j, V::fmadd(av, V::load(brow + j), V::load(crow + j)));
      for (; j < n; ++j) crow[j] += arow[p] * brow[j];
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
  using V = typename VecOf<T>::type;
  const std::size_t W = V::width;
  if (!accumulate)
    for (std::size_t i = 0; i < k * n; ++i) c[i] = T(0);
  for (std::size_t r = 0; r < m; ++r) {
    const T* arow = a + r * k;
    const T* brow = b + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const auto av = V::set1(arow[i]);
      T* crow = c + i * n;
      std::size_t j = 0;
      for (; j + W <= n; j += W)
        V::store(crow + j, V::fmadd(av, V::load(brow + j), V::load(crow + j)));
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

template <typename T>
void adam_update(T* w, T* m, T* v, const T* g, std::size_t n, T lr, T beta1, T beta2,
                 T eps, T bias1, T bias2) {
  using V = typename VecOf<T>::type;
  const T q1 = T(1) - beta1;
  const T q2 = T(1) - beta2;
  const auto b1v = V::set1(beta1), q1v = V::set1(q1);
  const auto b2v = V::set1(beta2), q2v = V::set1(q2);
  const auto lrv = V::set1(lr), epsv = V::set1(eps);
  const auto c1v = V::set1(bias1), c2v = V::set1(bias2);
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    auto gv = V::load(g + i);
    auto mv = V::add(V::mul(b1v, V::load(m + i)), V::mul(q1v, gv));
    auto vv = V::add(V::mul(b2v, V::load(v + i)), V::mul(q2v, V::mul(gv, gv)));
    V::store(m + i, mv);
    V::store(v + i, vv);
    auto mhat = V::mul(mv, c1v);
    auto vhat = V::mul(vv, c2v);
    auto t = V::div(mhat, V::add(V::sqrt(vhat), epsv));
    V::store(w + i, V::sub(V::load(w + i), V::mul(lrv, t)));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + q1 * g[i];
    v[i] = beta2 * v[i] + q2 * (g[i] * g[i]);
    const T mhat = m[i] * bias1;
    const T vhat = v[i] * bias2;
    w[i] = w[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

#else  // !SEMISUP_AVX2_TU: fall through to the scalar reference

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) { scalar::add(a, b, out, n); }
template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) { scalar::sub(a, b, out, n); }
template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) { scalar::mul(a, b, out, n); }
template <typename T>
void scale(const T* a, T c, T* out, std::size_t n) { scalar::scale(a, c, out, n); }
template <typename T>
void acc(T* out, const T* a, std::size_t n) { scalar::acc(out, a, n); }
template <typename T>
void lerp(const T* a, const T* b, T alpha, T* out, std::size_t n) {
  scalar::lerp(a, b, alpha, out, n);
}
template <typename T>
void leaky_relu(const T* x, T slope, T* out, std::size_t n) {
  scalar::leaky_relu(x, slope, out, n);
}
template <typename T>
void leaky_relu_grad(const T* x, const T* g, T slope, T* out, std::size_t n) {
  scalar::leaky_relu_grad(x, g, slope, out, n);
}
template <typename T>
void clamp_min(const T* x, T floor, T* out, std::size_t n) {
  scalar::clamp_min(x, floor, out, n);
}
template <typename T>
T reduce_sum(const T* x, std::size_t n) { return scalar::reduce_sum(x, n); }
template <typename T>
T reduce_max(const T* x, std::size_t n) { return scalar::reduce_max(x, n); }
template <typename T>
T dot(const T* a, const T* b, std::size_t n) { return scalar::dot(a, b, n); }
template <typename T>
bool all_finite(const T* x, std::size_t n) { return scalar::all_finite(x, n); }
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  scalar::matmul_nn(a, b, c, m, k, n, accumulate);
}
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
  scalar::matmul_nt(a, b, c, m, n, k, accumulate);
}
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  scalar::matmul_tn(a, b, c, m, k, n, accumulate);
}
template <typename T>
void adam_update(T* w, T* m, T* v, const T* g, std::size_t n, T lr, T beta1, T beta2,
                 T eps, T bias1, T bias2) {
  scalar::adam_update(w, m, v, g, n, lr, beta1, beta2, eps, bias1, bias2);
}

#endif  // SEMISUP_AVX2_TU

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

}  // namespace semisup::kernels::avx2
