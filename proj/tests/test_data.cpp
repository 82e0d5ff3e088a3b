#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "semisup/data/augment.hpp"
#include "semisup/tensor/primitives.hpp"
#include "semisup/data/glyphs.hpp"
#include "semisup/data/idx_io.hpp"
#include "semisup/data/normalize.hpp"
#include "semisup/data/sampler.hpp"
#include "semisup/data/two_moons.hpp"

using namespace semisup;
using namespace semisup::data;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("two moons: degenerate noise lies exactly on the half circles") {
  auto ds = make_two_moons(400, 0.0, 7);
  CHECK(ds.size() == 400);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.examples[i * 2];
    const double y = ds.examples[i * 2 + 1];
    double r;
    if (ds.labels[i] == 0)
      r = std::sqrt(x * x + y * y);
    else
      r = std::sqrt((x - 1.0) * (x - 1.0) + (y - 0.5) * (y - 0.5));
    CHECK(std::abs(r - 1.0) <= 1e-12);
  }
}

TEST_CASE("two moons: counts, errors, determinism") {
  auto ds = make_two_moons(1000, 0.1, 3);
  std::size_t c0 = 0, c1 = 0;
  for (int l : ds.labels) (l == 0 ? c0 : c1)++;
  CHECK(c0 == 500);
  CHECK(c1 == 500);
  CHECK_THROWS_AS(make_two_moons(999, 0.1, 3), ValueError);
  CHECK_THROWS_AS(make_two_moons(1000, -0.1, 3), ValueError);

  auto again = make_two_moons(1000, 0.1, 3);
  CHECK(ds.examples.same_values(again.examples));
}

TEST_CASE("two moons: a 1-NN oracle classifier reaches <= 2% error") {
  auto ds = make_two_moons(1000, 0.1, 11);
  // split: first 800 train, last 200 test
  std::size_t errors = 0;
  for (std::size_t t = 800; t < 1000; ++t) {
    const double tx = ds.examples[t * 2], ty = ds.examples[t * 2 + 1];
    double best = 1e300;
    int pred = -1;
    for (std::size_t i = 0; i < 800; ++i) {
      const double dx = ds.examples[i * 2] - tx, dy = ds.examples[i * 2 + 1] - ty;
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        pred = ds.labels[i];
      }
    }
    if (pred != ds.labels[t]) ++errors;
  }
  CHECK(static_cast<double>(errors) / 200.0 <= 0.02);
}

TEST_CASE("idx: header arithmetic, mismatch and truncation errors") {
  const std::string img = temp_path("semisup_idx_img.bin");
  const std::string lab = temp_path("semisup_idx_lab.bin");
  {
    // 2 images of 28x28, constant bytes
    std::ofstream out(img, std::ios::binary);
    const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    std::vector<unsigned char> body(2 * 28 * 28, 128);
    out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  }
  auto ds = load_idx(img);
  CHECK(ds.size() == 2);
  CHECK(ds.feature_shape() == Shape{28, 28, 1});
  CHECK(ds.examples[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-12));

  {
    // 3 labels for 2 images -> count mismatch
    std::ofstream out(lab, std::ios::binary);
    const unsigned char hdr[] = {0, 0, 8, 1, 0, 0, 0, 3};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    const unsigned char body[] = {1, 2, 3};
    out.write(reinterpret_cast<const char*>(body), 3);
  }
  CHECK_THROWS_AS(load_idx(img, lab), IoError);

  {
    // truncated image payload: error message carries the byte offset
    std::ofstream out(img, std::ios::binary);
    const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    std::vector<unsigned char> body(100, 5);
    out.write(reinterpret_cast<const char*>(body.data()), 100);
  }
  CHECK_THROWS_WITH_AS(load_idx(img), doctest::Contains("byte"), IoError);

  {
    // wrong magic
    std::ofstream out(img, std::ios::binary);
    const unsigned char hdr[] = {0, 0, 8, 1, 0, 0, 0, 2};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  }
  CHECK_THROWS_AS(load_idx(img), IoError);
  std::remove(img.c_str());
  std::remove(lab.c_str());
}

TEST_CASE("idx: write-then-read round-trips bit-identically") {
  RandomSource src(21);
  const std::size_t n = 37, side = 9;
  std::vector<double> px(n * side * side);
  std::vector<int> labels(n);
  for (auto& p : px) p = static_cast<double>(src.uniform_int(0, 255)) / 255.0;
  for (auto& l : labels) l = static_cast<int>(src.uniform_int(0, 9));
  Dataset ds;
  ds.examples = Tensor<double>::from_vec(Shape{n, side, side, 1}, std::move(px));
  ds.labels = labels;
  ds.class_count = 10;

  const std::string img = temp_path("semisup_rt_img.bin");
  const std::string lab = temp_path("semisup_rt_lab.bin");
  save_idx(ds, img, lab);
  auto rt = load_idx(img, lab);
  CHECK(rt.examples.same_values(ds.examples));
  CHECK(rt.labels == ds.labels);
  std::remove(img.c_str());
  std::remove(lab.c_str());
}

TEST_CASE("standardize: moments, idempotence, held-out algebra, errors") {
  auto ds = make_two_moons(500, 0.15, 5);
  auto res = standardize(ds);
  const std::size_t n = res.data.size();
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mean += res.data.examples[i * 2 + ch];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = res.data.examples[i * 2 + ch] - mean;
      var += d * d;
    }
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(std::sqrt(var / static_cast<double>(n)) - 1.0) <= 1e-6);
  }

  // idempotence: standardizing standardized data changes nothing (within 1e-6)
  auto twice = standardize(res.data);
  for (std::size_t i = 0; i < res.data.examples.size(); ++i)
    CHECK(std::abs(twice.data.examples[i] - res.data.examples[i]) <= 1e-6);

  // held-out mean maps to (raw_mean - train_mean) / train_std
  auto held = make_two_moons(300, 0.15, 99);
  auto mapped = apply_transform(res.record, held);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double raw_mean = 0, out_mean = 0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      raw_mean += held.examples[i * 2 + ch];
      out_mean += mapped.examples[i * 2 + ch];
    }
    raw_mean /= static_cast<double>(held.size());
    out_mean /= static_cast<double>(held.size());
    const double expect = (raw_mean - res.record.mean[ch]) / res.record.scale[ch];
    CHECK(out_mean == doctest::Approx(expect).epsilon(1e-10));
  }

  // constant channel -> error
  Dataset flat;
  flat.examples = Tensor<double>::full(Shape{10, 3}, 2.5);
  CHECK_THROWS_AS(standardize(flat), ValueError);
}

TEST_CASE("zca: exactly-white input gives the identity transform") {
  // rows c*e_i and -c*e_i with c = sqrt(d): empirical covariance is exactly I
  const std::size_t d = 6;
  std::vector<double> x(2 * d * d, 0.0);
  const double c = std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < d; ++i) {
    x[(2 * i) * d + i] = c;
    x[(2 * i + 1) * d + i] = -c;
  }
  Dataset ds;
  ds.examples = Tensor<double>::from_vec(Shape{2 * d, d}, std::move(x));
  auto res = zca_whiten(ds, 1e-15);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(res.record.scale[i * d + j] - (i == j ? 1.0 : 0.0)) <= 1e-6);
}

TEST_CASE("zca: output covariance approaches identity, transform symmetric") {
  RandomSource src(13);
  const std::size_t n = 500, d = 16;
  // correlated features: random mix of latent gaussians
  std::vector<double> mix(d * d);
  for (auto& v : mix) v = src.gaussian(1.0);
  std::vector<double> x(n * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> z(d);
    for (auto& v : z) v = src.gaussian(1.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < d; ++k) x[r * d + i] += mix[i * d + k] * z[k];
      x[r * d + i] += 0.3;  // nonzero mean
    }
  }
  Dataset ds;
  ds.examples = Tensor<double>::from_vec(Shape{n, d}, std::move(x));
  auto res = zca_whiten(ds, 1e-8);

  // transform symmetric to 1e-10
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(res.record.scale[i * d + j] - res.record.scale[j * d + i]) <= 1e-10);

  // output covariance within 1e-3 of identity elementwise
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        cov[i * d + j] += res.data.examples[r * d + i] * res.data.examples[r * d + j];
  for (auto& v : cov) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(cov[i * d + j] - (i == j ? 1.0 : 0.0)) <= 1e-3);

  // reapplying the record to its own training data is bit-identical
  auto re = apply_transform(res.record, ds);
  CHECK(re.examples.same_values(res.data.examples));

  CHECK_THROWS_AS(zca_whiten(ds, 0.0), ValueError);
  CHECK_THROWS_AS(zca_whiten(ds, -1.0), ValueError);
}

TEST_CASE("augment: identity, involution, uniformity, errors") {
  RandomSource src(17);
  auto img = draw_noise<double>(src, NoiseKind::Gaussian, 1.0, 0, Shape{8, 8, 1});

  AugmentConfig none;
  none.translate_max = 0;
  none.flip = false;
  auto same = augment(img, none, src);
  CHECK(same.same_values(img));

  CHECK(hflip(hflip(img)).same_values(img));

  // translation moves content and zero-fills the vacated border
  auto tr = translate_image(img, 2, 0, false);
  CHECK(tr.at({3, 0, 0}) == 0.0);
  CHECK(tr.at({3, 2, 0}) == img.at({3, 0, 0}));
  auto refl = translate_image(img, 2, 0, true);
  CHECK(refl.at({3, 0, 0}) == img.at({3, 1, 0}));

  // dx frequencies over 1e5 draws: each value in {-2..2} near 0.2
  int counts[5] = {0, 0, 0, 0, 0};
  auto probe = Tensor<double>::zeros(Shape{8, 8, 1});
  AugmentConfig cfg;
  cfg.translate_max = 2;
  for (int i = 0; i < 100000; ++i) {
    const int dx = static_cast<int>(src.uniform_int(-2, 2));
    counts[dx + 2]++;
  }
  for (int k = 0; k < 5; ++k)
    CHECK(std::abs(counts[k] / 100000.0 - 0.2) <= 0.01);
  (void)probe;

  AugmentConfig big;
  big.translate_max = 8;
  CHECK_THROWS_AS(augment(img, big, src), ValueError);
}

TEST_CASE("remove_labels: equal per-class counts, seeds, errors") {
  auto ds = make_glyph_digits({.count = 400, .image_size = 12}, 2);
  RandomSource a(1), b(2);
  auto split = remove_labels(ds, 25, a);
  CHECK(split.labeled.size() == 250);
  CHECK(split.unlabeled.size() == 150);
  std::vector<int> per_class(10, 0);
  for (auto i : split.labeled) per_class[static_cast<std::size_t>(ds.labels[i])]++;
  for (int c : per_class) CHECK(c == 25);

  // disjoint
  std::set<std::size_t> lab(split.labeled.begin(), split.labeled.end());
  for (auto u : split.unlabeled) CHECK(lab.count(u) == 0);

  // different seeds pick different subsets with identical counts
  auto split_b = remove_labels(ds, 25, b);
  CHECK(split_b.labeled.size() == 250);
  CHECK(split.labeled != split_b.labeled);

  // full keep -> no unlabeled
  auto full = remove_labels(ds, 40, a);
  CHECK(full.labeled.size() == 400);
  CHECK(full.unlabeled.empty());

  CHECK_THROWS_AS(remove_labels(ds, 41, a), ValueError);
}

TEST_CASE("sampler: quotas, masks, stream accounting") {
  auto ds = make_glyph_digits({.count = 300, .image_size = 12}, 3);
  RandomSource rng(5);
  auto split = remove_labels(ds, 25, rng);  // 250 labeled, 50 unlabeled
  SamplerState sampler(split, rng);

  auto batch = sampler.sample<float>(1, 99);
  CHECK(batch.size() == 100);
  CHECK(batch.labeled_count() == 1);
  CHECK(batch.labeled_mask[0] == 1);
  CHECK(batch.labels[0] >= 0);
  for (std::size_t i = 1; i < 100; ++i) {
    CHECK(batch.labels[i] == -1);  // no label leaks through the unlabeled stream
    CHECK(batch.labeled_mask[i] == 0);
  }

  auto pure = sampler.sample<float>(4, 0);
  CHECK(pure.size() == 4);
  CHECK(pure.labeled_count() == 4);

  // one full pass over 250 labeled examples at k=1: each seen exactly once
  SamplerState fresh(split, RandomSource(9));
  std::map<std::int64_t, int> seen;
  for (int s = 0; s < 250; ++s) {
    auto b = fresh.sample<float>(1, 0);
    seen[b.example_ids[0]]++;
  }
  CHECK(seen.size() == 250);
  for (const auto& [id, cnt] : seen) CHECK(cnt == 1);

  // fairness over m complete passes
  for (int s = 0; s < 500; ++s) {
    auto b = fresh.sample<float>(1, 0);
    seen[b.example_ids[0]]++;
  }
  for (const auto& [id, cnt] : seen) CHECK(cnt == 3);

  CHECK_THROWS_AS(sampler.sample<float>(0, 0), ValueError);
}

TEST_CASE("sampler: mixed mode and reuse-disabled errors") {
  auto ds = make_glyph_digits({.count = 100, .image_size = 12}, 4);
  RandomSource rng(6);
  auto split = remove_labels(ds, 3, rng);  // 30 labeled, 70 unlabeled

  SamplerState mixed(split, rng);
  std::size_t labeled_total = 0;
  for (int i = 0; i < 10; ++i) {
    auto b = mixed.sample_mixed<float>(10);
    CHECK(b.size() == 10);
    labeled_total += b.labeled_count();
    for (std::size_t r = 0; r < b.size(); ++r)
      if (!b.labeled_mask[r]) CHECK(b.labels[r] == -1);
  }
  CHECK(labeled_total == 30);  // one full pass over all 100 examples

  SamplerState no_reuse(split, rng, /*reuse=*/false);
  CHECK_THROWS_AS(no_reuse.sample<float>(31, 0), ValueError);
  // exhaustion with reuse disabled
  for (int i = 0; i < 30; ++i) no_reuse.sample<float>(1, 0);
  CHECK_THROWS_AS(no_reuse.sample<float>(1, 0), ValueError);
}

TEST_CASE("sampler: extra pool streams as unlabeled with id -1") {
  auto ds = make_glyph_digits({.count = 40, .image_size = 12}, 7);
  RandomSource rng(7);
  auto split = remove_labels(ds, 2, rng);
  split.extra = make_glyph_digits({.count = 60, .image_size = 12}, 8);
  split.extra.labels.clear();  // unlabeled pool
  SamplerState sampler(split, rng);

  std::size_t extra_rows = 0;
  for (int i = 0; i < 20; ++i) {
    auto b = sampler.sample<float>(1, 9);
    for (std::size_t r = 0; r < b.size(); ++r) {
      if (b.example_ids[r] < 0) {
        ++extra_rows;
        CHECK(b.labels[r] == -1);
      }
    }
  }
  CHECK(extra_rows > 0);  // the 60-row pool dominates the 20-row unlabeled set
}

TEST_CASE("glyphs: balance, range, determinism") {
  auto ds = make_glyph_digits({.count = 500, .image_size = 12}, 42);
  CHECK(ds.size() == 500);
  CHECK(ds.class_count == 10);
  CHECK(ds.feature_shape() == Shape{12, 12, 1});
  std::vector<int> per_class(10, 0);
  for (int l : ds.labels) per_class[static_cast<std::size_t>(l)]++;
  for (int c : per_class) CHECK(c == 50);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(ds.examples[i] >= 0.0);
    CHECK(ds.examples[i] <= 1.0);
  }
  auto again = make_glyph_digits({.count = 500, .image_size = 12}, 42);
  CHECK(again.examples.same_values(ds.examples));
  CHECK_THROWS_AS(make_glyph_digits({.count = 10, .image_size = 8, .translate_max = 2}, 1),
                  ValueError);
}
