#include "semisup/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace semisup::kernels {

namespace avx2 {
bool avx2_compiled();  // defined in kernels_avx2.cpp
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "?";
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

bool avx2_usable() { return cpu_has_avx2() && avx2::avx2_compiled(); }

Backend resolve_backend() {
  if (const char* env = std::getenv("SEMISUP_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2") {
      if (!avx2_usable())
        throw std::runtime_error("SEMISUP_KERNELS=avx2 but AVX2+FMA is unavailable");
      return Backend::Avx2;
    }
    throw std::runtime_error("SEMISUP_KERNELS must be 'scalar' or 'avx2', got '" + v + "'");
  }
  return avx2_usable() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<int> g_backend{-1};

}  // namespace

Backend active_backend() {
  int b = g_backend.load(std::memory_order_relaxed);
  if (b < 0) {
    b = static_cast<int>(resolve_backend());
    g_backend.store(b, std::memory_order_relaxed);
  }
  return static_cast<Backend>(b);
}

void force_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_usable())
    throw std::runtime_error("cannot force avx2 backend: AVX2+FMA is unavailable");
  g_backend.store(static_cast<int>(b), std::memory_order_relaxed);
}

#define SEMISUP_DISPATCH_VOID(name, args, call)                     \
  if (active_backend() == Backend::Avx2) {                          \
    avx2::name call;                                                \
  } else {                                                          \
    scalar::name call;                                              \
  }

#define SEMISUP_DISPATCH_RET(name, call)                            \
  return active_backend() == Backend::Avx2 ? avx2::name call : scalar::name call;

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(add, , (a, b, out, n))
}
template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(sub, , (a, b, out, n))
}
template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(mul, , (a, b, out, n))
}
template <typename T>
void scale(const T* a, T c, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(scale, , (a, c, out, n))
}
template <typename T>
void acc(T* out, const T* a, std::size_t n) {
  SEMISUP_DISPATCH_VOID(acc, , (out, a, n))
}
template <typename T>
void lerp(const T* a, const T* b, T alpha, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(lerp, , (a, b, alpha, out, n))
}
template <typename T>
void leaky_relu(const T* x, T slope, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(leaky_relu, , (x, slope, out, n))
}
template <typename T>
void leaky_relu_grad(const T* x, const T* g, T slope, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(leaky_relu_grad, , (x, g, slope, out, n))
}
template <typename T>
void clamp_min(const T* x, T floor, T* out, std::size_t n) {
  SEMISUP_DISPATCH_VOID(clamp_min, , (x, floor, out, n))
}
template <typename T>
T reduce_sum(const T* x, std::size_t n) {
  SEMISUP_DISPATCH_RET(reduce_sum, (x, n))
}
template <typename T>
T reduce_max(const T* x, std::size_t n) {
  SEMISUP_DISPATCH_RET(reduce_max, (x, n))
}
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  SEMISUP_DISPATCH_RET(dot, (a, b, n))
}
template <typename T>
bool all_finite(const T* x, std::size_t n) {
  SEMISUP_DISPATCH_RET(all_finite, (x, n))
}
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  SEMISUP_DISPATCH_VOID(matmul_nn, , (a, b, c, m, k, n, accumulate))
}
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
  SEMISUP_DISPATCH_VOID(matmul_nt, , (a, b, c, m, n, k, accumulate))
}
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  SEMISUP_DISPATCH_VOID(matmul_tn, , (a, b, c, m, k, n, accumulate))
}
template <typename T>
void adam_update(T* w, T* m, T* v, const T* g, std::size_t n, T lr, T beta1, T beta2,
                 T eps, T bias1, T bias2) {
  SEMISUP_DISPATCH_VOID(adam_update, , (w, m, v, g, n, lr, beta1, beta2, eps, bias1, bias2))
}

#undef SEMISUP_DISPATCH_VOID
#undef SEMISUP_DISPATCH_RET

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

}  // namespace semisup::kernels
