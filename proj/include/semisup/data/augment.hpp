#pragma once

#include "semisup/tensor/random.hpp"
#include "semisup/tensor/tensor.hpp"

namespace semisup::data {

struct AugmentConfig {
  int translate_max = 2;
  bool flip = false;           // horizontal flip with p = 0.5
  bool reflect_border = false; // else vacated pixels are zero-filled
};

// Integer translation of an [H,W,C] image; (dx, dy) moves content right/down.
template <typename T>
Tensor<T> translate_image(const Tensor<T>& img, int dx, int dy, bool reflect_border) {
  const auto& s = img.shape();
  if (s.rank() != 3) throw ShapeError("translate_image: need [HxWxC], got " + s.str());
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(s[0]);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(s[1]);
  const std::size_t c = s[2];
  std::vector<T> out(img.size(), T(0));
  auto reflect = [](std::ptrdiff_t i, std::ptrdiff_t nmax) {
    while (i < 0 || i >= nmax) {
      if (i < 0) i = -i - 1;
      if (i >= nmax) i = 2 * nmax - i - 1;
    }
    return i;
  };
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::ptrdiff_t sy = y - dy;
      std::ptrdiff_t sx = x - dx;
      if (reflect_border) {
        sy = reflect(sy, h);
        sx = reflect(sx, w);
      } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
        continue;  // zero fill
      }
      const T* sp = img.data() + (static_cast<std::size_t>(sy) * s[1] +
                                  static_cast<std::size_t>(sx)) * c;
      T* dp = out.data() + (static_cast<std::size_t>(y) * s[1] + static_cast<std::size_t>(x)) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dp[ch] = sp[ch];
    }
  return Tensor<T>::from_vec(s, std::move(out));
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& img) {
  const auto& s = img.shape();
  if (s.rank() != 3) throw ShapeError("hflip: need [HxWxC], got " + s.str());
  const std::size_t h = s[0], w = s[1], c = s[2];
  std::vector<T> out(img.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(y * w + x) * c + ch] = img[(y * w + (w - 1 - x)) * c + ch];
  return Tensor<T>::from_vec(s, std::move(out));
}

// Random translation with dx, dy drawn uniformly from the inclusive range
// [-translate_max, translate_max], then an optional horizontal flip (p=0.5).
// Labels are untouched by construction (images only).
template <typename T>
Tensor<T> augment(const Tensor<T>& example, const AugmentConfig& cfg, RandomSource& src) {
  const auto& s = example.shape();
  if (s.rank() != 3) throw ShapeError("augment: need [HxWxC], got " + s.str());
  if (cfg.translate_max < 0) throw ValueError("augment: translate_max must be >= 0");
  if (cfg.translate_max >= static_cast<int>(std::min(s[0], s[1])))
    throw ValueError("augment: translate_max " + std::to_string(cfg.translate_max) +
                     " >= image side " + std::to_string(std::min(s[0], s[1])));
  Tensor<T> out = example;
  if (cfg.translate_max > 0) {
    const int dx = static_cast<int>(src.uniform_int(-cfg.translate_max, cfg.translate_max));
    const int dy = static_cast<int>(src.uniform_int(-cfg.translate_max, cfg.translate_max));
    if (dx != 0 || dy != 0) out = translate_image(out, dx, dy, cfg.reflect_border);
  }
  if (cfg.flip && src.bernoulli(0.5)) out = hflip(out);
  return out;
}

}  // namespace semisup::data
