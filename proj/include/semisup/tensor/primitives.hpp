#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semisup/tensor/random.hpp"
#include "semisup/tensor/tensor.hpp"

namespace semisup {

// Primitive set of the tensor engine. Everything the layer stack and the cost
// functions need composes from these; each op has a hand-derived
// vector-Jacobian product that is finite-difference tested.
enum class PrimOp : std::uint8_t {
  Add,            // a + b, same shapes
  Sub,            // a - b
  Mul,            // a * b, elementwise
  Scale,          // a * attrs.scalar
  MatMul,         // [M,K] x [K,N] -> [M,N]
  Conv2d,         // x[B,H,W,Ci], k[Kh,Kw,Ci,Co], stride 1, same|valid padding
  MaxPool2x2,     // [B,H,W,C] -> [B,H/2,W/2,C]
  GlobalAvgPool,  // [B,H,W,C] -> [B,C]
  LeakyRelu,      // slope = attrs.scalar
  Log,
  Exp,
  ClampMin,       // max(x, attrs.scalar)
  Softmax,        // rowwise over [M,N]
  MeanAll,        // -> scalar
  SumAll,         // -> scalar
  ChannelMean,    // [..,C] -> [C], mean over leading dims
  SubChannel,     // x[..,C] - m[C]
  AddChannel,     // x[..,C] + b[C]
  WeightNorm,     // (v[..,Co], g[Co]) -> g * v / ||v|| per output column
  FlattenRows,    // [B, d1, d2, ...] -> [B, d1*d2*...]
};

const char* prim_name(PrimOp op);
PrimOp prim_from_name(const std::string& name);  // unknown name -> ValueError

enum class Padding { Same, Valid };

struct PrimAttrs {
  Padding padding = Padding::Same;  // Conv2d
  double scalar = 0.0;              // Scale factor / LeakyRelu slope / ClampMin floor
};

namespace detail {

// Forward pass; fills aux with op-specific backward state (argmax indices for
// MaxPool2x2, empty otherwise) and checks the output for non-finite values.
template <typename T>
Tensor<T> prim_forward(PrimOp op, const std::vector<Tensor<T>>& inputs, const PrimAttrs& attrs,
                       std::vector<std::int32_t>& aux);

// Accumulates input gradients for one node: grad_in[i] is a pre-zeroed buffer
// of inputs[i]'s size, or nullptr when that input needs no gradient.
template <typename T>
void prim_vjp(PrimOp op, const std::vector<Tensor<T>>& inputs, const Tensor<T>& output,
              const PrimAttrs& attrs, const std::vector<std::int32_t>& aux, const T* grad_out,
              const std::vector<T*>& grad_in);

}  // namespace detail

// Record-free evaluation of a single primitive.
template <typename T>
Tensor<T> apply_primitive(PrimOp op, const std::vector<Tensor<T>>& inputs,
                          const PrimAttrs& attrs = {});

template <typename T>
Tensor<T> apply_primitive(PrimOp op, std::initializer_list<Tensor<T>> inputs,
                          const PrimAttrs& attrs = {}) {
  return apply_primitive(op, std::vector<Tensor<T>>(inputs), attrs);
}

enum class NoiseKind { Gaussian, Bernoulli, UniformInt };

// Draws a noise tensor from one sub-stream. Parameter meaning by kind:
//   Gaussian   p0 = sigma (>= 0)
//   Bernoulli  p0 = p in [0,1]
//   UniformInt p0 = a, p1 = b, a <= b, inclusive
template <typename T>
Tensor<T> draw_noise(RandomSource& src, NoiseKind kind, double p0, double p1, const Shape& shape);

}  // namespace semisup
