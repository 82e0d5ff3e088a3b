#pragma once

#include <optional>
#include <string>

#include "semisup/data/dataset.hpp"

namespace semisup::data {

// IDX binary format, big-endian: magic 0x00000803 for unsigned-byte image
// tensors (count x rows x cols), 0x00000801 for label vectors. Pixels load as
// [n, rows, cols, 1] scaled to [0,1].
Dataset load_idx(const std::string& images_path,
                 const std::optional<std::string>& labels_path = std::nullopt);

// Writes grayscale images quantized to bytes (round(x*255), clamped), plus an
// optional label file. Round-trips bit-identically for byte-quantized data.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::optional<std::string>& labels_path = std::nullopt);

}  // namespace semisup::data
