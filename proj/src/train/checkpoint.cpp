#include "semisup/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace semisup::train {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("checkpoint: cannot write '" + path + "'");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("checkpoint: short write to '" + path_ + "'");
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class ReaderB {
 public:
  explicit ReaderB(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("checkpoint: cannot open '" + path + "'");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("checkpoint: truncated file '" + path_ + "'");
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }

 private:
  std::string path_;
  std::ifstream in_;
};

template <typename T>
void write_tensor_map(Writer& w, const std::map<std::string, Tensor<T>>& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& [name, t] : m) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.shape().rank()));
    for (std::size_t d = 0; d < t.shape().rank(); ++d) w.u64(t.shape()[d]);
    w.bytes(t.data(), t.size() * sizeof(T));
  }
}

template <typename T>
std::map<std::string, Tensor<T>> read_tensor_map(ReaderB& r) {
  std::map<std::string, Tensor<T>> m;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    std::vector<std::size_t> dims(r.u8());
    for (auto& d : dims) d = r.u64();
    Shape shape(dims);
    std::vector<T> data(shape.numel());
    r.bytes(data.data(), data.size() * sizeof(T));
    m.emplace(std::move(name), Tensor<T>::from_vec(std::move(shape), std::move(data)));
  }
  return m;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const TrainerState<T>& state,
                     std::uint64_t config_hash, const SamplerCursors& cursors) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(sizeof(T)));
  w.u8(static_cast<std::uint8_t>(state.algorithm));
  w.u64(state.step);
  w.u64(config_hash);
  w.u64(state.student.fingerprint);
  w.u64(cursors.labeled_pass);
  w.u64(cursors.labeled_cursor);
  w.u64(cursors.unlabeled_pass);
  w.u64(cursors.unlabeled_cursor);
  w.u64(cursors.mixed_pass);
  w.u64(cursors.mixed_cursor);

  write_tensor_map(w, state.student.trainable);
  write_tensor_map(w, state.student.stats);
  write_tensor_map(w, state.ema.teacher.trainable);
  write_tensor_map(w, state.ema.teacher.stats);
  write_tensor_map(w, state.opt.m);
  write_tensor_map(w, state.opt.v);
  w.u64(state.opt.step);

  const bool has_te = state.algorithm == Algorithm::TemporalEnsembling;
  w.u8(has_te ? 1 : 0);
  if (has_te) {
    w.u64(state.te.size());
    w.u64(state.te.classes());
    w.f64(state.te.decay());
    w.bytes(state.te.raw_counts().data(), state.te.raw_counts().size() * sizeof(std::uint32_t));
    w.bytes(state.te.raw_z().data(), state.te.raw_z().size() * sizeof(T));
  }
}

template <typename T>
void load_checkpoint(const std::string& path, TrainerState<T>& state,
                     std::uint64_t expected_config_hash, SamplerCursors& cursors) {
  ReaderB r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in '" + path + "'");
  if (r.u32() != kVersion) throw IoError("checkpoint: unsupported version in '" + path + "'");
  if (r.u8() != sizeof(T))
    throw ConfigError("checkpoint: float width mismatch (run precision differs)");
  const auto alg = static_cast<Algorithm>(r.u8());
  if (alg != state.algorithm) throw ConfigError("checkpoint: algorithm mismatch");
  state.step = r.u64();
  const std::uint64_t hash = r.u64();
  if (expected_config_hash != 0 && hash != expected_config_hash)
    throw ConfigError("checkpoint: config does not match the one that produced the file");
  const std::uint64_t fingerprint = r.u64();
  if (fingerprint != state.student.fingerprint)
    throw ConfigError("checkpoint: model spec mismatch");
  cursors.labeled_pass = r.u64();
  cursors.labeled_cursor = r.u64();
  cursors.unlabeled_pass = r.u64();
  cursors.unlabeled_cursor = r.u64();
  cursors.mixed_pass = r.u64();
  cursors.mixed_cursor = r.u64();

  state.student.trainable = read_tensor_map<T>(r);
  state.student.stats = read_tensor_map<T>(r);
  state.ema.teacher.trainable = read_tensor_map<T>(r);
  state.ema.teacher.stats = read_tensor_map<T>(r);
  state.ema.teacher.fingerprint = state.student.fingerprint;
  state.opt.m = read_tensor_map<T>(r);
  state.opt.v = read_tensor_map<T>(r);
  state.opt.step = r.u64();

  if (r.u8()) {
    const std::size_t n = r.u64();
    const std::size_t classes = r.u64();
    const double decay = r.f64();
    std::vector<std::uint32_t> counts(n);
    r.bytes(counts.data(), counts.size() * sizeof(std::uint32_t));
    std::vector<T> z(n * classes);
    r.bytes(z.data(), z.size() * sizeof(T));
    state.te = TemporalEnsembleStore<T>(n, classes, decay);
    state.te.restore(std::move(z), std::move(counts));
  }
}

template void save_checkpoint<float>(const std::string&, const TrainerState<float>&,
                                     std::uint64_t, const SamplerCursors&);
template void save_checkpoint<double>(const std::string&, const TrainerState<double>&,
                                      std::uint64_t, const SamplerCursors&);
template void load_checkpoint<float>(const std::string&, TrainerState<float>&, std::uint64_t,
                                     SamplerCursors&);
template void load_checkpoint<double>(const std::string&, TrainerState<double>&, std::uint64_t,
                                      SamplerCursors&);

}  // namespace semisup::train
