#pragma once

#include <cstddef>

// Data-parallel inner loops behind the tensor primitives. Every kernel has a
// scalar reference implementation and an AVX2 variant; the active backend is
// chosen once per process (CPU detection, overridable with the SEMISUP_KERNELS
// environment variable or force_backend()).
//
// Equivalence contract, enforced by tests/test_kernels.cpp:
//   - elementwise kernels (add..adam_update) produce bit-identical results on
//     both backends: the AVX2 variants use plain mul/add (no FMA contraction)
//     in the same per-element order as the scalar code;
//   - reductions and matmuls reassociate on the AVX2 path and agree with the
//     scalar reference within a small relative tolerance only.

namespace semisup::kernels {

enum class Backend { Scalar, Avx2 };

const char* backend_name(Backend b);
bool cpu_has_avx2();

// Resolved on first call: SEMISUP_KERNELS=scalar|avx2 if set, else the best
// backend the CPU supports. Stable for the rest of the process unless
// force_backend() is called.
Backend active_backend();
void force_backend(Backend b);  // throws if the CPU cannot run the backend

#define SEMISUP_KERNEL_DECLS                                                   \
  template <typename T> void add(const T* a, const T* b, T* out, std::size_t n);          \
  template <typename T> void sub(const T* a, const T* b, T* out, std::size_t n);          \
  template <typename T> void mul(const T* a, const T* b, T* out, std::size_t n);          \
  template <typename T> void scale(const T* a, T c, T* out, std::size_t n);               \
  template <typename T> void acc(T* out, const T* a, std::size_t n); /* out += a */       \
  /* out = alpha*a + (1-alpha)*b */                                                       \
  template <typename T> void lerp(const T* a, const T* b, T alpha, T* out, std::size_t n);\
  template <typename T> void leaky_relu(const T* x, T slope, T* out, std::size_t n);      \
  template <typename T> void leaky_relu_grad(const T* x, const T* g, T slope, T* out,     \
                                             std::size_t n);                              \
  template <typename T> void clamp_min(const T* x, T floor, T* out, std::size_t n);       \
  template <typename T> T reduce_sum(const T* x, std::size_t n);                          \
  template <typename T> T reduce_max(const T* x, std::size_t n);                          \
  template <typename T> T dot(const T* a, const T* b, std::size_t n);                     \
  template <typename T> bool all_finite(const T* x, std::size_t n);                       \
  /* C[m,n] (+)= A[m,k] B[k,n], all row-major */                                          \
  template <typename T> void matmul_nn(const T* a, const T* b, T* c, std::size_t m,       \
                                       std::size_t k, std::size_t n, bool accumulate);    \
  /* C[m,k] (+)= A[m,n] B[k,n]^T */                                                       \
  template <typename T> void matmul_nt(const T* a, const T* b, T* c, std::size_t m,       \
                                       std::size_t n, std::size_t k, bool accumulate);    \
  /* C[k,n] (+)= A[m,k]^T B[m,n] */                                                       \
  template <typename T> void matmul_tn(const T* a, const T* b, T* c, std::size_t m,       \
                                       std::size_t k, std::size_t n, bool accumulate);    \
  /* bias1 = 1/(1-beta1^t), bias2 = 1/(1-beta2^t) */                                      \
  template <typename T> void adam_update(T* w, T* m, T* v, const T* g, std::size_t n,     \
                                         T lr, T beta1, T beta2, T eps, T bias1, T bias2);

namespace scalar {
SEMISUP_KERNEL_DECLS
}

namespace avx2 {
SEMISUP_KERNEL_DECLS
}

// Dispatched entry points.
SEMISUP_KERNEL_DECLS

#undef SEMISUP_KERNEL_DECLS

}  // namespace semisup::kernels
