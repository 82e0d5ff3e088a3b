#include "semisup/data/idx_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

namespace semisup::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

class Reader {
 public:
  Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("idx: cannot open '" + path + "'");
  }

  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("idx: truncated payload in '" + path_ + "' at byte " +
                    std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())) +
                    " (wanted " + std::to_string(n) + " more)");
    offset_ += n;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void write_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
  Reader img(images_path);
  const std::uint32_t magic = img.u32();
  if (magic != kImageMagic)
    throw IoError("idx: bad magic 0x" + std::to_string(magic) + " in '" + images_path +
                  "' at byte 0 (expected image tensor 0x00000803)");
  const std::size_t n = img.u32();
  const std::size_t rows = img.u32();
  const std::size_t cols = img.u32();
  if (n == 0 || rows == 0 || cols == 0)
    throw IoError("idx: empty dimensions in '" + images_path + "'");
  std::vector<unsigned char> raw(n * rows * cols);
  img.read(raw.data(), raw.size());

  std::vector<double> pixels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = raw[i] / 255.0;

  Dataset ds;
  ds.examples = Tensor<double>::from_vec(Shape{n, rows, cols, 1}, std::move(pixels));

  if (labels_path) {
    Reader lab(*labels_path);
    const std::uint32_t lmagic = lab.u32();
    if (lmagic != kLabelMagic)
      throw IoError("idx: bad magic 0x" + std::to_string(lmagic) + " in '" + *labels_path +
                    "' at byte 0 (expected label vector 0x00000801)");
    const std::size_t ln = lab.u32();
    if (ln != n)
      throw IoError("idx: label count " + std::to_string(ln) + " != image count " +
                    std::to_string(n));
    std::vector<unsigned char> lraw(ln);
    lab.read(lraw.data(), lraw.size());
    ds.labels.assign(lraw.begin(), lraw.end());
    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    ds.class_count = static_cast<std::size_t>(max_label) + 1;
    ds.validate();
  }
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::optional<std::string>& labels_path) {
  const Shape feat = ds.feature_shape();
  if (feat.rank() != 3 || feat[2] != 1)
    throw IoError("idx: can only write grayscale images [HxWx1], got features " + feat.str());
  std::ofstream out(images_path, std::ios::binary);
  if (!out) throw IoError("idx: cannot write '" + images_path + "'");
  write_u32(out, kImageMagic);
  write_u32(out, static_cast<std::uint32_t>(ds.size()));
  write_u32(out, static_cast<std::uint32_t>(feat[0]));
  write_u32(out, static_cast<std::uint32_t>(feat[1]));
  std::vector<unsigned char> raw(ds.examples.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::round(ds.examples[i] * 255.0);
    raw[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("idx: short write to '" + images_path + "'");

  if (labels_path) {
    if (!ds.labeled()) throw IoError("idx: dataset has no labels to write");
    std::ofstream lout(*labels_path, std::ios::binary);
    if (!lout) throw IoError("idx: cannot write '" + *labels_path + "'");
    write_u32(lout, kLabelMagic);
    write_u32(lout, static_cast<std::uint32_t>(ds.size()));
    std::vector<unsigned char> lraw(ds.labels.size());
    for (std::size_t i = 0; i < lraw.size(); ++i)
      lraw[i] = static_cast<unsigned char>(ds.labels[i]);
    lout.write(reinterpret_cast<const char*>(lraw.data()),
               static_cast<std::streamsize>(lraw.size()));
    if (!lout) throw IoError("idx: short write to '" + *labels_path + "'");
  }
}

}  // namespace semisup::data
