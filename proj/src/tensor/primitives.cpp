#include "semisup/tensor/primitives.hpp"

#include <cmath>

#include "semisup/kernels/kernels.hpp"

namespace semisup {

const char* prim_name(PrimOp op) {
  switch (op) {
    case PrimOp::Add: return "add";
    case PrimOp::Sub: return "sub";
    case PrimOp::Mul: return "mul";
    case PrimOp::Scale: return "scale";
    case PrimOp::MatMul: return "matmul";
    case PrimOp::Conv2d: return "conv2d";
    case PrimOp::MaxPool2x2: return "maxpool2x2";
    case PrimOp::GlobalAvgPool: return "global_avgpool";
    case PrimOp::LeakyRelu: return "leaky_relu";
    case PrimOp::Log: return "log";
    case PrimOp::Exp: return "exp";
    case PrimOp::ClampMin: return "clamp_min";
    case PrimOp::Softmax: return "softmax";
    case PrimOp::MeanAll: return "mean_all";
    case PrimOp::SumAll: return "sum_all";
    case PrimOp::ChannelMean: return "channel_mean";
    case PrimOp::SubChannel: return "sub_channel";
    case PrimOp::AddChannel: return "add_channel";
    case PrimOp::WeightNorm: return "weight_norm";
    case PrimOp::FlattenRows: return "flatten_rows";
  }
  return "?";
}

PrimOp prim_from_name(const std::string& name) {
  static const std::pair<const char*, PrimOp> table[] = {
      {"add", PrimOp::Add},
      {"sub", PrimOp::Sub},
      {"mul", PrimOp::Mul},
      {"scale", PrimOp::Scale},
      {"matmul", PrimOp::MatMul},
      {"conv2d", PrimOp::Conv2d},
      {"maxpool2x2", PrimOp::MaxPool2x2},
      {"global_avgpool", PrimOp::GlobalAvgPool},
      {"leaky_relu", PrimOp::LeakyRelu},
      {"log", PrimOp::Log},
      {"exp", PrimOp::Exp},
      {"clamp_min", PrimOp::ClampMin},
      {"softmax", PrimOp::Softmax},
      {"mean_all", PrimOp::MeanAll},
      {"sum_all", PrimOp::SumAll},
      {"channel_mean", PrimOp::ChannelMean},
      {"sub_channel", PrimOp::SubChannel},
      {"add_channel", PrimOp::AddChannel},
      {"weight_norm", PrimOp::WeightNorm},
      {"flatten_rows", PrimOp::FlattenRows},
  };
  for (const auto& [n, op] : table)
    if (name == n) return op;
  throw ValueError("unknown primitive-id '" + name + "'");
}

namespace {

namespace K = kernels;

void expect(bool ok, PrimOp op, const std::string& msg) {
  if (!ok) throw ShapeError(std::string(prim_name(op)) + ": " + msg);
}

void expect_arity(PrimOp op, const auto& inputs, std::size_t n) {
  if (inputs.size() != n)
    throw ShapeError(std::string(prim_name(op)) + ": expected " + std::to_string(n) +
                     " inputs, got " + std::to_string(inputs.size()));
}

struct ConvGeom {
  std::size_t batch, in_h, in_w, in_c, k_h, k_w, out_c, out_h, out_w, pad_h, pad_w;
  std::size_t patch() const { return k_h * k_w * in_c; }
  std::size_t rows() const { return batch * out_h * out_w; }
};

ConvGeom conv_geometry(const Shape& x, const Shape& k, Padding padding) {
  expect(x.rank() == 4, PrimOp::Conv2d, "input must be rank 4 (BxHxWxC), got " + x.str());
  expect(k.rank() == 4, PrimOp::Conv2d, "kernel must be rank 4 (KhxKwxCixCo), got " + k.str());
  expect(k[2] == x[3], PrimOp::Conv2d,
         "kernel input channels " + std::to_string(k[2]) + " != input channels " +
             std::to_string(x[3]) + " (input " + x.str() + ", kernel " + k.str() + ")");
  ConvGeom g{};
  g.batch = x[0]; g.in_h = x[1]; g.in_w = x[2]; g.in_c = x[3];
  g.k_h = k[0]; g.k_w = k[1]; g.out_c = k[3];
  if (padding == Padding::Same) {
    expect(g.k_h % 2 == 1 && g.k_w % 2 == 1, PrimOp::Conv2d,
           "same padding needs odd kernel dims, got " + k.str());
    g.pad_h = (g.k_h - 1) / 2;
    g.pad_w = (g.k_w - 1) / 2;
    g.out_h = g.in_h;
    g.out_w = g.in_w;
  } else {
    expect(g.in_h >= g.k_h && g.in_w >= g.k_w, PrimOp::Conv2d,
           "valid padding: input " + x.str() + " smaller than kernel " + k.str());
    g.pad_h = g.pad_w = 0;
    g.out_h = g.in_h - g.k_h + 1;
    g.out_w = g.in_w - g.k_w + 1;
  }
  return g;
}

// Patch matrix rows in (kh, kw, ci) order so the kernel tensor flattens to the
// matching [Kh*Kw*Ci, Co] matrix without copying.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* out) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* xb = x + b * g.in_h * g.in_w * g.in_c;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T* row = out + ((b * g.out_h + oh) * g.out_w + ow) * patch;
        std::size_t p = 0;
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) -
                                      static_cast<std::ptrdiff_t>(g.pad_w);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) || iw < 0 ||
                iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
              for (std::size_t c = 0; c < g.in_c; ++c) row[p++] = T(0);
            } else {
              const T* px = xb + (static_cast<std::size_t>(ih) * g.in_w +
                                  static_cast<std::size_t>(iw)) * g.in_c;
              for (std::size_t c = 0; c < g.in_c; ++c) row[p++] = px[c];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* cols, const ConvGeom& g, T* x_grad) {
  const std::size_t patch = g.patch();
  for (std::size_t b = 0; b < g.batch; ++b) {
    T* xb = x_grad + b * g.in_h * g.in_w * g.in_c;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const T* row = cols + ((b * g.out_h + oh) * g.out_w + ow) * patch;
        std::size_t p = 0;
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + kh) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + kw) -
                                      static_cast<std::ptrdiff_t>(g.pad_w);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h) || iw < 0 ||
                iw >= static_cast<std::ptrdiff_t>(g.in_w)) {
              p += g.in_c;
            } else {
              T* px = xb + (static_cast<std::size_t>(ih) * g.in_w +
                            static_cast<std::size_t>(iw)) * g.in_c;
              for (std::size_t c = 0; c < g.in_c; ++c) px[c] += row[p++];
            }
          }
        }
      }
    }
  }
}

// Views [.., C] as [R, C].
std::pair<std::size_t, std::size_t> channel_view(PrimOp op, const Shape& s) {
  expect(s.rank() >= 1, op, "needs at least rank 1, got " + s.str());
  const std::size_t c = s[s.rank() - 1];
  return {s.numel() / c, c};
}

}  // namespace

namespace detail {

template <typename T>
Tensor<T> prim_forward(PrimOp op, const std::vector<Tensor<T>>& inputs, const PrimAttrs& attrs,
                       std::vector<std::int32_t>& aux) {
  aux.clear();
  switch (op) {
    case PrimOp::Add:
    case PrimOp::Sub:
    case PrimOp::Mul: {
      expect_arity(op, inputs, 2);
      const auto& a = inputs[0];
      const auto& b = inputs[1];
      expect(a.shape() == b.shape(), op,
             "shape mismatch " + a.shape().str() + " vs " + b.shape().str());
      std::vector<T> out(a.size());
      if (op == PrimOp::Add) K::add(a.data(), b.data(), out.data(), out.size());
      else if (op == PrimOp::Sub) K::sub(a.data(), b.data(), out.data(), out.size());
      else K::mul(a.data(), b.data(), out.data(), out.size());
      return Tensor<T>::from_vec(a.shape(), std::move(out));
    }
    case PrimOp::Scale: {
      expect_arity(op, inputs, 1);
      std::vector<T> out(inputs[0].size());
      K::scale(inputs[0].data(), static_cast<T>(attrs.scalar), out.data(), out.size());
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
    case PrimOp::MatMul: {
      expect_arity(op, inputs, 2);
      const auto& a = inputs[0];
      const auto& b = inputs[1];
      expect(a.shape().rank() == 2 && b.shape().rank() == 2, op,
             "needs rank-2 inputs, got " + a.shape().str() + " and " + b.shape().str());
      expect(a.shape()[1] == b.shape()[0], op,
             "inner dims differ: " + a.shape().str() + " x " + b.shape().str());
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      std::vector<T> out(m * n);
      K::matmul_nn(a.data(), b.data(), out.data(), m, k, n, false);
      return Tensor<T>::from_vec(Shape{m, n}, std::move(out));
    }
    case PrimOp::Conv2d: {
      expect_arity(op, inputs, 2);
      const auto g = conv_geometry(inputs[0].shape(), inputs[1].shape(), attrs.padding);
      std::vector<T> cols(g.rows() * g.patch());
      im2col(inputs[0].data(), g, cols.data());
      std::vector<T> out(g.rows() * g.out_c);
      K::matmul_nn(cols.data(), inputs[1].data(), out.data(), g.rows(), g.patch(), g.out_c,
                   false);
      return Tensor<T>::from_vec(Shape{g.batch, g.out_h, g.out_w, g.out_c}, std::move(out));
    }
    case PrimOp::MaxPool2x2: {
      expect_arity(op, inputs, 1);
      const auto& s = inputs[0].shape();
      expect(s.rank() == 4, op, "input must be rank 4, got " + s.str());
      expect(s[1] % 2 == 0 && s[2] % 2 == 0, op, "spatial dims must be even, got " + s.str());
      const std::size_t b = s[0], h = s[1], w = s[2], c = s[3];
      const std::size_t oh = h / 2, ow = w / 2;
      std::vector<T> out(b * oh * ow * c);
      aux.resize(out.size());
      const T* x = inputs[0].data();
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = ((bi * h + 2 * i) * w + 2 * j) * c + ch;
              const std::size_t offs[4] = {0, c, w * c, w * c + c};
              T best = x[base];
              int arg = 0;
              for (int q = 1; q < 4; ++q) {
                const T v = x[base + offs[q]];
                if (v > best) { best = v; arg = q; }
              }
              const std::size_t oi = ((bi * oh + i) * ow + j) * c + ch;
              out[oi] = best;
              aux[oi] = arg;
            }
      return Tensor<T>::from_vec(Shape{b, oh, ow, c}, std::move(out));
    }
    case PrimOp::GlobalAvgPool: {
      expect_arity(op, inputs, 1);
      const auto& s = inputs[0].shape();
      expect(s.rank() == 4, op, "input must be rank 4, got " + s.str());
      const std::size_t b = s[0], hw = s[1] * s[2], c = s[3];
      std::vector<T> out(b * c, T(0));
      const T* x = inputs[0].data();
      for (std::size_t bi = 0; bi < b; ++bi) {
        T* ob = out.data() + bi * c;
        const T* xb = x + bi * hw * c;
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) ob[ch] += xb[p * c + ch];
        for (std::size_t ch = 0; ch < c; ++ch) ob[ch] /= static_cast<T>(hw);
      }
      return Tensor<T>::from_vec(Shape{b, c}, std::move(out));
    }
    case PrimOp::LeakyRelu: {
      expect_arity(op, inputs, 1);
      std::vector<T> out(inputs[0].size());
      K::leaky_relu(inputs[0].data(), static_cast<T>(attrs.scalar), out.data(), out.size());
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
    case PrimOp::Log: {
      expect_arity(op, inputs, 1);
      std::vector<T> out(inputs[0].size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(inputs[0][i]);
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
    case PrimOp::Exp: {
      expect_arity(op, inputs, 1);
      std::vector<T> out(inputs[0].size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(inputs[0][i]);
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
    case PrimOp::ClampMin: {
      expect_arity(op, inputs, 1);
      std::vector<T> out(inputs[0].size());
      K::clamp_min(inputs[0].data(), static_cast<T>(attrs.scalar), out.data(), out.size());
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
    case PrimOp::Softmax: {
      expect_arity(op, inputs, 1);
      const auto& s = inputs[0].shape();
      expect(s.rank() == 2, op, "input must be rank 2, got " + s.str());
      const std::size_t m = s[0], n = s[1];
      std::vector<T> out(m * n);
      const T* x = inputs[0].data();
      for (std::size_t r = 0; r < m; ++r) {
        const T* xr = x + r * n;
        T* yr = out.data() + r * n;
        const T mx = K::reduce_max(xr, n);
        T sum = T(0);
        for (std::size_t j = 0; j < n; ++j) {
          yr[j] = std::exp(xr[j] - mx);
          sum += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) yr[j] /= sum;
      }
      return Tensor<T>::from_vec(s, std::move(out));
    }
    case PrimOp::MeanAll:
    case PrimOp::SumAll: {
      expect_arity(op, inputs, 1);
      T s = K::reduce_sum(inputs[0].data(), inputs[0].size());
      if (op == PrimOp::MeanAll) s /= static_cast<T>(inputs[0].size());
      return Tensor<T>::scalar(s);
    }
    case PrimOp::ChannelMean: {
      expect_arity(op, inputs, 1);
      const auto [rows, c] = channel_view(op, inputs[0].shape());
      std::vector<T> out(c, T(0));
      const T* x = inputs[0].data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) out[ch] += x[r * c + ch];
      for (std::size_t ch = 0; ch < c; ++ch) out[ch] /= static_cast<T>(rows);
      return Tensor<T>::from_vec(Shape{c}, std::move(out));
    }
    case PrimOp::SubChannel:
    case PrimOp::AddChannel: {
      expect_arity(op, inputs, 2);
      const auto [rows, c] = channel_view(op, inputs[0].shape());
      expect(inputs[1].shape().rank() == 1 && inputs[1].shape()[0] == c, op,
             "channel vector " + inputs[1].shape().str() + " does not match input " +
                 inputs[0].shape().str());
      std::vector<T> out(inputs[0].size());
      const T* x = inputs[0].data();
      const T* m = inputs[1].data();
      const bool neg = op == PrimOp::SubChannel;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch)
          out[r * c + ch] = neg ? x[r * c + ch] - m[ch] : x[r * c + ch] + m[ch];
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
    case PrimOp::FlattenRows: {
      expect_arity(op, inputs, 1);
      const auto& s = inputs[0].shape();
      expect(s.rank() >= 2, op, "input must be at least rank 2, got " + s.str());
      return inputs[0].reshaped(Shape{s[0], inputs[0].size() / s[0]});
    }
    case PrimOp::WeightNorm: {
      expect_arity(op, inputs, 2);
      const auto [rows, c] = channel_view(op, inputs[0].shape());
      expect(inputs[1].shape().rank() == 1 && inputs[1].shape()[0] == c, op,
             "scale vector " + inputs[1].shape().str() + " does not match direction " +
                 inputs[0].shape().str());
      const T* v = inputs[0].data();
      const T* g = inputs[1].data();
      std::vector<T> norm(c, T(0));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) norm[ch] += v[r * c + ch] * v[r * c + ch];
      for (std::size_t ch = 0; ch < c; ++ch) {
        norm[ch] = std::sqrt(norm[ch]);
        if (norm[ch] == T(0))
          throw ValueError("weight_norm: zero direction for output column " +
                           std::to_string(ch));
      }
      std::vector<T> out(inputs[0].size());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch)
          out[r * c + ch] = g[ch] * v[r * c + ch] / norm[ch];
      return Tensor<T>::from_vec(inputs[0].shape(), std::move(out));
    }
  }
  throw ValueError("unknown primitive-id " + std::to_string(static_cast<int>(op)));
}

template <typename T>
void prim_vjp(PrimOp op, const std::vector<Tensor<T>>& inputs, const Tensor<T>& output,
              const PrimAttrs& attrs, const std::vector<std::int32_t>& aux, const T* grad_out,
              const std::vector<T*>& grad_in) {
  switch (op) {
    case PrimOp::Add: {
      for (int i = 0; i < 2; ++i)
        if (grad_in[i]) K::acc(grad_in[i], grad_out, inputs[i].size());
      return;
    }
    case PrimOp::Sub: {
      if (grad_in[0]) K::acc(grad_in[0], grad_out, inputs[0].size());
      if (grad_in[1])
        for (std::size_t i = 0; i < inputs[1].size(); ++i) grad_in[1][i] -= grad_out[i];
      return;
    }
    case PrimOp::Mul: {
      const std::size_t n = inputs[0].size();
      for (int i = 0; i < 2; ++i)
        if (grad_in[i]) {
          const T* other = inputs[1 - i].data();
          for (std::size_t j = 0; j < n; ++j) grad_in[i][j] += grad_out[j] * other[j];
        }
      return;
    }
    case PrimOp::Scale: {
      if (!grad_in[0]) return;
      const T c = static_cast<T>(attrs.scalar);
      for (std::size_t j = 0; j < inputs[0].size(); ++j) grad_in[0][j] += grad_out[j] * c;
      return;
    }
    case PrimOp::MatMul: {
      const std::size_t m = inputs[0].shape()[0], k = inputs[0].shape()[1],
                        n = inputs[1].shape()[1];
      if (grad_in[0]) K::matmul_nt(grad_out, inputs[1].data(), grad_in[0], m, n, k, true);
      if (grad_in[1]) K::matmul_tn(inputs[0].data(), grad_out, grad_in[1], m, k, n, true);
      return;
    }
    case PrimOp::Conv2d: {
      const auto g = conv_geometry(inputs[0].shape(), inputs[1].shape(), attrs.padding);
      if (grad_in[1]) {
        std::vector<T> cols(g.rows() * g.patch());
        im2col(inputs[0].data(), g, cols.data());
        K::matmul_tn(cols.data(), grad_out, grad_in[1], g.rows(), g.patch(), g.out_c, true);
      }
      if (grad_in[0]) {
        std::vector<T> dcols(g.rows() * g.patch());
        K::matmul_nt(grad_out, inputs[1].data(), dcols.data(), g.rows(), g.out_c, g.patch(),
                     false);
        col2im_acc(dcols.data(), g, grad_in[0]);
      }
      return;
    }
    case PrimOp::MaxPool2x2: {
      if (!grad_in[0]) return;
      const auto& s = inputs[0].shape();
      const std::size_t b = s[0], h = s[1], w = s[2], c = s[3];
      const std::size_t oh = h / 2, ow = w / 2;
      const std::size_t offs[4] = {0, c, w * c, w * c + c};
      for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t oi = ((bi * oh + i) * ow + j) * c + ch;
              const std::size_t base = ((bi * h + 2 * i) * w + 2 * j) * c + ch;
              grad_in[0][base + offs[aux[oi]]] += grad_out[oi];
            }
      return;
    }
    case PrimOp::GlobalAvgPool: {
      if (!grad_in[0]) return;
      const auto& s = inputs[0].shape();
      const std::size_t b = s[0], hw = s[1] * s[2], c = s[3];
      for (std::size_t bi = 0; bi < b; ++bi) {
        const T* gb = grad_out + bi * c;
        T* xb = grad_in[0] + bi * hw * c;
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t ch = 0; ch < c; ++ch)
            xb[p * c + ch] += gb[ch] / static_cast<T>(hw);
      }
      return;
    }
    case PrimOp::LeakyRelu: {
      if (!grad_in[0]) return;
      const T slope = static_cast<T>(attrs.scalar);
      const T* x = inputs[0].data();
      for (std::size_t j = 0; j < inputs[0].size(); ++j)
        grad_in[0][j] += x[j] >= T(0) ? grad_out[j] : slope * grad_out[j];
      return;
    }
    case PrimOp::Log: {
      if (!grad_in[0]) return;
      const T* x = inputs[0].data();
      for (std::size_t j = 0; j < inputs[0].size(); ++j) grad_in[0][j] += grad_out[j] / x[j];
      return;
    }
    case PrimOp::Exp: {
      if (!grad_in[0]) return;
      const T* y = output.data();
      for (std::size_t j = 0; j < inputs[0].size(); ++j) grad_in[0][j] += grad_out[j] * y[j];
      return;
    }
    case PrimOp::ClampMin: {
      if (!grad_in[0]) return;
      const T floor = static_cast<T>(attrs.scalar);
      const T* x = inputs[0].data();
      for (std::size_t j = 0; j < inputs[0].size(); ++j)
        if (x[j] >= floor) grad_in[0][j] += grad_out[j];
      return;
    }
    case PrimOp::Softmax: {
      if (!grad_in[0]) return;
      const std::size_t m = inputs[0].shape()[0], n = inputs[0].shape()[1];
      const T* y = output.data();
      for (std::size_t r = 0; r < m; ++r) {
        const T* yr = y + r * n;
        const T* gr = grad_out + r * n;
        const T d = K::dot(gr, yr, n);
        T* o = grad_in[0] + r * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += yr[j] * (gr[j] - d);
      }
      return;
    }
    case PrimOp::MeanAll: {
      if (!grad_in[0]) return;
      const T g = grad_out[0] / static_cast<T>(inputs[0].size());
      for (std::size_t j = 0; j < inputs[0].size(); ++j) grad_in[0][j] += g;
      return;
    }
    case PrimOp::SumAll: {
      if (!grad_in[0]) return;
      const T g = grad_out[0];
      for (std::size_t j = 0; j < inputs[0].size(); ++j) grad_in[0][j] += g;
      return;
    }
    case PrimOp::ChannelMean: {
      if (!grad_in[0]) return;
      const auto [rows, c] = channel_view(op, inputs[0].shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch)
          grad_in[0][r * c + ch] += grad_out[ch] / static_cast<T>(rows);
      return;
    }
    case PrimOp::SubChannel:
    case PrimOp::AddChannel: {
      const auto [rows, c] = channel_view(op, inputs[0].shape());
      if (grad_in[0]) K::acc(grad_in[0], grad_out, inputs[0].size());
      if (grad_in[1]) {
        const T sgn = op == PrimOp::SubChannel ? T(-1) : T(1);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t ch = 0; ch < c; ++ch) grad_in[1][ch] += sgn * grad_out[r * c + ch];
      }
      return;
    }
    case PrimOp::FlattenRows: {
      if (grad_in[0]) K::acc(grad_in[0], grad_out, inputs[0].size());
      return;
    }
    case PrimOp::WeightNorm: {
      const auto [rows, c] = channel_view(op, inputs[0].shape());
      const T* v = inputs[0].data();
      const T* gs = inputs[1].data();
      // recompute per-column norms
      std::vector<T> norm(c, T(0));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) norm[ch] += v[r * c + ch] * v[r * c + ch];
      for (std::size_t ch = 0; ch < c; ++ch) norm[ch] = std::sqrt(norm[ch]);
      std::vector<T> dotg(c, T(0));  // sum_f grad_w[f,o] * vhat[f,o]
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch)
          dotg[ch] += grad_out[r * c + ch] * (v[r * c + ch] / norm[ch]);
      if (grad_in[1])
        for (std::size_t ch = 0; ch < c; ++ch) grad_in[1][ch] += dotg[ch];
      if (grad_in[0]) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T vhat = v[r * c + ch] / norm[ch];
            grad_in[0][r * c + ch] +=
                gs[ch] / norm[ch] * (grad_out[r * c + ch] - dotg[ch] * vhat);
          }
      }
      return;
    }
  }
  throw ValueError("unknown primitive-id " + std::to_string(static_cast<int>(op)));
}

template Tensor<float> prim_forward<float>(PrimOp, const std::vector<Tensor<float>>&,
                                           const PrimAttrs&, std::vector<std::int32_t>&);
template Tensor<double> prim_forward<double>(PrimOp, const std::vector<Tensor<double>>&,
                                             const PrimAttrs&, std::vector<std::int32_t>&);
template void prim_vjp<float>(PrimOp, const std::vector<Tensor<float>>&, const Tensor<float>&,
                              const PrimAttrs&, const std::vector<std::int32_t>&, const float*,
                              const std::vector<float*>&);
template void prim_vjp<double>(PrimOp, const std::vector<Tensor<double>>&,
                               const Tensor<double>&, const PrimAttrs&,
                               const std::vector<std::int32_t>&, const double*,
                               const std::vector<double*>&);

}  // namespace detail

template <typename T>
Tensor<T> apply_primitive(PrimOp op, const std::vector<Tensor<T>>& inputs,
                          const PrimAttrs& attrs) {
  std::vector<std::int32_t> aux;
  Tensor<T> out = detail::prim_forward(op, inputs, attrs, aux);
  if (!out.all_finite())
    throw NumericError(std::string(prim_name(op)) + ": non-finite values in output (shape " +
                       out.shape().str() + ")");
  return out;
}

template Tensor<float> apply_primitive<float>(PrimOp, const std::vector<Tensor<float>>&,
                                              const PrimAttrs&);
template Tensor<double> apply_primitive<double>(PrimOp, const std::vector<Tensor<double>>&,
                                                const PrimAttrs&);

template <typename T>
Tensor<T> draw_noise(RandomSource& src, NoiseKind kind, double p0, double p1,
                     const Shape& shape) {
  const std::size_t n = shape.numel();
  std::vector<T> out(n);
  switch (kind) {
    case NoiseKind::Gaussian: {
      if (p0 < 0.0) throw ValueError("draw_noise: gaussian sigma must be >= 0");
      for (std::size_t i = 0; i < n; i += 2) {
        double z0, z1;
        src.gaussian_pair(p0, z0, z1);
        out[i] = static_cast<T>(z0);
        if (i + 1 < n) out[i + 1] = static_cast<T>(z1);
      }
      break;
    }
    case NoiseKind::Bernoulli: {
      if (p0 < 0.0 || p0 > 1.0) throw ValueError("draw_noise: bernoulli p must lie in [0,1]");
      for (std::size_t i = 0; i < n; ++i) out[i] = src.uniform01() < p0 ? T(1) : T(0);
      break;
    }
    case NoiseKind::UniformInt: {
      const auto a = static_cast<std::int64_t>(p0);
      const auto b = static_cast<std::int64_t>(p1);
      if (a > b) throw ValueError("draw_noise: uniform-int needs a <= b");
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(src.uniform_int(a, b));
      break;
    }
  }
  return Tensor<T>::from_vec(shape, std::move(out));
}

template Tensor<float> draw_noise<float>(RandomSource&, NoiseKind, double, double,
                                         const Shape&);
template Tensor<double> draw_noise<double>(RandomSource&, NoiseKind, double, double,
                                           const Shape&);

}  // namespace semisup
