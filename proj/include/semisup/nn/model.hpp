#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semisup/tensor/primitives.hpp"
#include "semisup/tensor/shape.hpp"

namespace semisup::nn {

enum class LayerKind { Conv, Dense, MaxPool, AvgPool, Dropout, GaussianNoise, Flatten, SoftmaxHead };

struct LayerSpec {
  LayerKind kind{};
  std::size_t filters = 0;            // Conv
  std::size_t kernel = 0;             // Conv
  Padding padding = Padding::Same;    // Conv
  std::size_t units = 0;              // Dense / SoftmaxHead
  double rate = 0.0;                  // Dropout
  double sigma = 0.0;                 // GaussianNoise
  bool weight_norm = true;            // Conv / Dense / SoftmaxHead
  bool mean_only_bn = true;           // Conv / Dense / SoftmaxHead
  bool bias = true;                   // Conv / Dense / SoftmaxHead

  bool weighted() const {
    return kind == LayerKind::Conv || kind == LayerKind::Dense || kind == LayerKind::SoftmaxHead;
  }
};

// Input augmentation the model advertises to the data pipeline.
struct AugmentSpec {
  int translate_max = 0;
  bool flip = false;
  bool reflect_border = false;  // default zero-fill of vacated pixels
};

struct ModelSpec {
  Shape input_shape;               // [H,W,C] for images, [D] for flat features
  std::vector<LayerSpec> layers;   // ends with exactly one SoftmaxHead
  int head_count = 1;              // 2 duplicates the final head on a shared trunk
  double lrelu_slope = 0.1;
  AugmentSpec augment;

  std::size_t class_count() const { return layers.empty() ? 0 : layers.back().units; }
};

// Checks the layer chain composes, and returns the per-layer output shapes
// (batch dimension excluded).
std::vector<Shape> validate_model(const ModelSpec& spec);

// Stable fingerprint of everything that determines parameter names/shapes;
// used as the WeightSet provenance check.
std::uint64_t model_fingerprint(const ModelSpec& spec);

// The 13-layer ConvNet: three conv blocks (128/256/512-256-128 filters),
// 2x2 maxpools with dropout 0.5 after the first two blocks, a global average
// pool, and a fully connected softmax head, with mean-only batch norm and
// weight norm on all weighted layers and gaussian input noise 0.15. Inputs of
// 16x16 or 8x8 drop one or both pooling stages.
ModelSpec canonical_convnet_spec(const Shape& input_shape, bool flip_allowed);

// Compact layer-list form used by the experiment config files, e.g.
//   "gnoise:0.15|conv:128:3:same|maxpool|dropout:0.5|avgpool|head:10"
// with optional per-layer suffixes ":nown", ":nobn", ":nobias".
std::string layers_to_string(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> layers_from_string(const std::string& text);

}  // namespace semisup::nn
