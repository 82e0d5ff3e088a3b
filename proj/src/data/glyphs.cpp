#include "semisup/data/glyphs.hpp"

#include <algorithm>

namespace semisup::data {

namespace {

// 5x7 digit font, one string per row, '#' marks a stroke pixel.
const char* const kFont[10][7] = {
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},  // 0
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},  // 1
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},  // 2
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},  // 3
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},  // 4
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},  // 5
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},  // 6
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},  // 7
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},  // 8
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},  // 9
};

}  // namespace

Dataset make_glyph_digits(const GlyphConfig& cfg, std::uint64_t seed) {
  const std::size_t s = cfg.image_size;
  if (cfg.count == 0) throw ValueError("glyphs: count must be positive");
  if (cfg.translate_max < 0) throw ValueError("glyphs: translate_max must be >= 0");
  if (s < 7 + 2 * static_cast<std::size_t>(cfg.translate_max))
    throw ValueError("glyphs: image_size " + std::to_string(s) +
                     " too small for a 5x7 glyph with translate_max " +
                     std::to_string(cfg.translate_max));
  if (cfg.pixel_dropout < 0.0 || cfg.pixel_dropout >= 1.0)
    throw ValueError("glyphs: pixel_dropout must lie in [0,1)");

  RandomSource root(seed);
  std::vector<double> pixels(cfg.count * s * s, 0.0);
  std::vector<int> labels(cfg.count);

  const int x0 = static_cast<int>((s - 5) / 2);
  const int y0 = static_cast<int>((s - 7) / 2);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const int digit = static_cast<int>(i % 10);
    labels[i] = digit;
    auto rng = root.substream("glyph", i);
    // continuous sub-pixel translation: each class forms a connected manifold
    // of positions, rendered with bilinear splatting (anti-aliased strokes)
    const double t = static_cast<double>(cfg.translate_max);
    const double dx = cfg.translate_max > 0 ? (2.0 * rng.uniform01() - 1.0) * t : 0.0;
    const double dy = cfg.translate_max > 0 ? (2.0 * rng.uniform01() - 1.0) * t : 0.0;
    const double intensity =
        cfg.min_intensity + (1.0 - cfg.min_intensity) * rng.uniform01();
    double* img = pixels.data() + i * s * s;
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c) {
        if (kFont[digit][r][c] != '1') continue;
        if (cfg.pixel_dropout > 0.0 && rng.bernoulli(cfg.pixel_dropout)) continue;
        const double y = y0 + r + dy;
        const double x = x0 + c + dx;
        const int yi = static_cast<int>(std::floor(y));
        const int xi = static_cast<int>(std::floor(x));
        const double fy = y - yi;
        const double fx = x - xi;
        const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
        const int oy[4] = {0, 0, 1, 1};
        const int ox[4] = {0, 1, 0, 1};
        for (int q = 0; q < 4; ++q) {
          const int yy = yi + oy[q];
          const int xx = xi + ox[q];
          if (yy < 0 || yy >= static_cast<int>(s) || xx < 0 || xx >= static_cast<int>(s))
            continue;
          double& px = img[static_cast<std::size_t>(yy) * s + static_cast<std::size_t>(xx)];
          px = std::min(1.0, px + intensity * w[q]);
        }
      }
    if (cfg.noise_sigma > 0.0) {
      for (std::size_t p = 0; p < s * s; ++p) {
        img[p] += rng.gaussian(cfg.noise_sigma);
        img[p] = std::clamp(img[p], 0.0, 1.0);
      }
    }
  }

  Dataset ds;
  ds.examples = Tensor<double>::from_vec(Shape{cfg.count, s, s, 1}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.class_count = 10;
  return ds;
}

}  // namespace semisup::data
