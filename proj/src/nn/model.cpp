#include "semisup/nn/model.hpp"

#include <sstream>

namespace semisup::nn {

namespace {

bool is_image(const Shape& s) { return s.rank() == 3; }

std::string layer_desc(std::size_t idx, const LayerSpec& l) {
  return "layer " + std::to_string(idx) + " (" + layers_to_string({l}) + ")";
}

}  // namespace

std::vector<Shape> validate_model(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ConfigError("model: no layers");
  if (spec.head_count != 1 && spec.head_count != 2)
    throw ConfigError("model: head_count must be 1 or 2");
  if (spec.input_shape.rank() != 1 && spec.input_shape.rank() != 3)
    throw ConfigError("model: input shape must be [D] or [HxWxC], got " +
                      spec.input_shape.str());
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::SoftmaxHead)
      throw ConfigError("model: softmax head must be the final layer");
  if (spec.layers.back().kind != LayerKind::SoftmaxHead)
    throw ConfigError("model: final layer must be a softmax head");

  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        if (!is_image(cur))
          throw ConfigError("model: conv on non-image input " + cur.str() + " at " +
                            layer_desc(i, l));
        if (l.filters == 0 || l.kernel == 0)
          throw ConfigError("model: conv needs filters and kernel at " + layer_desc(i, l));
        if (l.padding == Padding::Same) {
          if (l.kernel % 2 == 0)
            throw ConfigError("model: same padding needs an odd kernel at " + layer_desc(i, l));
          cur = Shape{cur[0], cur[1], l.filters};
        } else {
          if (cur[0] < l.kernel || cur[1] < l.kernel)
            throw ConfigError("model: input " + cur.str() + " too small for valid conv at " +
                              layer_desc(i, l));
          cur = Shape{cur[0] - l.kernel + 1, cur[1] - l.kernel + 1, l.filters};
        }
        break;
      }
      case LayerKind::Dense: {
        if (cur.rank() != 1)
          throw ConfigError("model: dense needs flat input, got " + cur.str() + " at " +
                            layer_desc(i, l));
        if (l.units == 0) throw ConfigError("model: dense needs units at " + layer_desc(i, l));
        cur = Shape{l.units};
        break;
      }
      case LayerKind::MaxPool: {
        if (!is_image(cur))
          throw ConfigError("model: maxpool on non-image input " + cur.str());
        if (cur[0] % 2 != 0 || cur[1] % 2 != 0 || cur[0] < 2 || cur[1] < 2)
          throw ConfigError("model: input " + cur.str() +
                            " too small for the pooling chain at " + layer_desc(i, l));
        cur = Shape{cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      }
      case LayerKind::AvgPool: {
        if (!is_image(cur))
          throw ConfigError("model: avgpool on non-image input " + cur.str());
        cur = Shape{cur[2]};
        break;
      }
      case LayerKind::Dropout: {
        if (l.rate < 0.0 || l.rate >= 1.0)
          throw ConfigError("model: dropout rate must lie in [0,1) at " + layer_desc(i, l));
        break;
      }
      case LayerKind::GaussianNoise: {
        if (l.sigma < 0.0)
          throw ConfigError("model: gaussian noise sigma must be >= 0 at " + layer_desc(i, l));
        break;
      }
      case LayerKind::Flatten: {
        if (cur.rank() < 2)
          throw ConfigError("model: flatten needs a multi-dim input, got " + cur.str());
        cur = Shape{cur.numel()};
        break;
      }
      case LayerKind::SoftmaxHead: {
        if (cur.rank() != 1)
          throw ConfigError("model: softmax head needs flat input, got " + cur.str());
        if (l.units < 2) throw ConfigError("model: softmax head needs >= 2 classes");
        cur = Shape{l.units};
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::uint64_t model_fingerprint(const ModelSpec& spec) {
  std::string repr = spec.input_shape.str() + "#" + layers_to_string(spec.layers) + "#" +
                     std::to_string(spec.head_count) + "#" + std::to_string(spec.lrelu_slope);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : repr) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

ModelSpec canonical_convnet_spec(const Shape& input_shape, bool flip_allowed) {
  if (input_shape.rank() != 3 || input_shape[0] != input_shape[1])
    throw ShapeError("canonical convnet needs a square HxWxC input, got " + input_shape.str());
  const std::size_t side = input_shape[0];
  int pools = 0;
  if (side == 32) pools = 2;
  else if (side == 16) pools = 1;
  else if (side == 8) pools = 0;
  else
    throw ShapeError("canonical convnet input side must be 32, 16 or 8 (pooling chain), got " +
                     input_shape.str());

  ModelSpec spec;
  spec.input_shape = input_shape;
  spec.head_count = 1;
  spec.lrelu_slope = 0.1;
  spec.augment = AugmentSpec{2, flip_allowed, false};

  auto conv = [](std::size_t filters, std::size_t kernel, Padding pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.filters = filters;
    l.kernel = kernel;
    l.padding = pad;
    return l;
  };
  auto& L = spec.layers;
  LayerSpec noise;
  noise.kind = LayerKind::GaussianNoise;
  noise.sigma = 0.15;
  L.push_back(noise);
  for (int i = 0; i < 3; ++i) L.push_back(conv(128, 3, Padding::Same));
  if (pools >= 1) L.push_back({.kind = LayerKind::MaxPool});
  L.push_back({.kind = LayerKind::Dropout, .rate = 0.5});
  for (int i = 0; i < 3; ++i) L.push_back(conv(256, 3, Padding::Same));
  if (pools >= 2) L.push_back({.kind = LayerKind::MaxPool});
  L.push_back({.kind = LayerKind::Dropout, .rate = 0.5});
  L.push_back(conv(512, 3, Padding::Valid));
  L.push_back(conv(256, 1, Padding::Same));
  L.push_back(conv(128, 1, Padding::Same));
  L.push_back({.kind = LayerKind::AvgPool});
  LayerSpec head;
  head.kind = LayerKind::SoftmaxHead;
  head.units = 10;
  L.push_back(head);

  validate_model(spec);
  return spec;
}

std::string layers_to_string(const std::vector<LayerSpec>& layers) {
  std::ostringstream out;
  bool first = true;
  for (const LayerSpec& l : layers) {
    if (!first) out << '|';
    first = false;
    switch (l.kind) {
      case LayerKind::Conv:
        out << "conv:" << l.filters << ':' << l.kernel << ':'
            << (l.padding == Padding::Same ? "same" : "valid");
        break;
      case LayerKind::Dense: out << "dense:" << l.units; break;
      case LayerKind::MaxPool: out << "maxpool"; break;
      case LayerKind::AvgPool: out << "avgpool"; break;
      case LayerKind::Dropout: out << "dropout:" << l.rate; break;
      case LayerKind::GaussianNoise: out << "gnoise:" << l.sigma; break;
      case LayerKind::Flatten: out << "flatten"; break;
      case LayerKind::SoftmaxHead: out << "head:" << l.units; break;
    }
    if (l.weighted()) {
      if (!l.weight_norm) out << ":nown";
      if (!l.mean_only_bn) out << ":nobn";
      if (!l.bias) out << ":nobias";
    }
  }
  return out.str();
}

std::vector<LayerSpec> layers_from_string(const std::string& text) {
  std::vector<LayerSpec> layers;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '|')) {
    // split on ':'
    std::vector<std::string> f;
    std::stringstream fs(item);
    std::string tok;
    while (std::getline(fs, tok, ':')) f.push_back(tok);
    if (f.empty() || f[0].empty()) throw ConfigError("model layers: empty entry in '" + text + "'");

    LayerSpec l;
    std::size_t consumed = 1;
    auto num = [&](std::size_t i) -> double {
      if (i >= f.size()) throw ConfigError("model layers: missing field in '" + item + "'");
      try {
        return std::stod(f[i]);
      } catch (...) {
        throw ConfigError("model layers: bad number '" + f[i] + "' in '" + item + "'");
      }
    };
    if (f[0] == "conv") {
      l.kind = LayerKind::Conv;
      l.filters = static_cast<std::size_t>(num(1));
      l.kernel = static_cast<std::size_t>(num(2));
      if (f.size() > 3 && (f[3] == "same" || f[3] == "valid")) {
        l.padding = f[3] == "same" ? Padding::Same : Padding::Valid;
        consumed = 4;
      } else {
        consumed = 3;
      }
    } else if (f[0] == "dense") {
      l.kind = LayerKind::Dense;
      l.units = static_cast<std::size_t>(num(1));
      consumed = 2;
    } else if (f[0] == "maxpool") {
      l.kind = LayerKind::MaxPool;
    } else if (f[0] == "avgpool") {
      l.kind = LayerKind::AvgPool;
    } else if (f[0] == "dropout") {
      l.kind = LayerKind::Dropout;
      l.rate = num(1);
      consumed = 2;
    } else if (f[0] == "gnoise") {
      l.kind = LayerKind::GaussianNoise;
      l.sigma = num(1);
      consumed = 2;
    } else if (f[0] == "flatten") {
      l.kind = LayerKind::Flatten;
    } else if (f[0] == "head") {
      l.kind = LayerKind::SoftmaxHead;
      l.units = static_cast<std::size_t>(num(1));
      consumed = 2;
    } else {
      throw ConfigError("model layers: unknown layer kind '" + f[0] + "'");
    }
    for (std::size_t i = consumed; i < f.size(); ++i) {
      if (f[i] == "nown") l.weight_norm = false;
      else if (f[i] == "nobn") l.mean_only_bn = false;
      else if (f[i] == "nobias") l.bias = false;
      else throw ConfigError("model layers: unknown flag '" + f[i] + "' in '" + item + "'");
    }
    layers.push_back(l);
  }
  if (layers.empty()) throw ConfigError("model layers: empty specification");
  return layers;
}

}  // namespace semisup::nn
