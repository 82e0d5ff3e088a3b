#pragma once

#include "semisup/data/dataset.hpp"

namespace semisup::data {

// Synthetic 10-class digit glyphs: a 5x7 bitmap font rendered onto a square
// canvas with random translation, per-image stroke intensity, stroke pixel
// dropout and additive gaussian noise. Classes cycle with the row index, so
// any prefix is nearly balanced.
struct GlyphConfig {
  std::size_t count = 2000;
  std::size_t image_size = 12;   // >= 7 + 2*translate_max
  int translate_max = 2;
  double min_intensity = 0.7;
  double pixel_dropout = 0.05;   // chance to drop a stroke pixel
  double noise_sigma = 0.12;
};

Dataset make_glyph_digits(const GlyphConfig& cfg, std::uint64_t seed);

}  // namespace semisup::data
