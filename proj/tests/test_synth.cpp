#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sshnet/metrics.hpp"
#include "sshnet/synth.hpp"
#include "test_support.hpp"

using namespace sshnet;
using namespace sshnet::synth;

namespace fs = std::filesystem;

TEST_SUITE_BEGIN("synth");

TEST_CASE("twelve built-in assets with sane mattes") {
  auto assets = make_default_assets();
  REQUIRE(assets.size() == 12);
  for (const auto& a : assets) {
    CHECK(a.height >= 16);
    CHECK(a.width >= 16);
    float max_alpha = 0.f;
    bool zero_edge = true;
    for (int r = 0; r < a.height; ++r)
      for (int c = 0; c < a.width; ++c) {
        float al = a.at(r, c, 3);
        CHECK(al >= 0.f);
        CHECK(al <= 1.f);
        max_alpha = std::max(max_alpha, al);
      }
    // Soft edge: the matte reaches (near) full opacity somewhere.
    CHECK(max_alpha > 0.9f);
    (void)zero_edge;
  }
  // Names are distinct.
  for (size_t i = 0; i < assets.size(); ++i)
    for (size_t j = i + 1; j < assets.size(); ++j)
      CHECK(assets[i].name != assets[j].name);
}

TEST_CASE("compositor: alpha 0 is the identity, bitwise") {
  Image base = make_synthetic_scene(128, 128, SeedSpec(1, "comp"));
  auto assets = make_default_assets();
  CorruptionSpec spec;
  spec.transparency = 0.0;
  spec.scale = 0.5;
  spec.row = 5;
  spec.col = 7;
  Image out = composite_watermark(base, assets[0], spec);
  CHECK(out.px == base.px);
}

TEST_CASE("compositor: full opacity replaces the pixel") {
  // Synthetic asset with alpha 1 and white color everywhere.
  WatermarkAsset a;
  a.height = a.width = 8;
  a.name = "solid";
  a.rgba.assign(8 * 8 * 4, 1.f);
  Image base(32, 32, 0.f);
  CorruptionSpec spec;
  spec.transparency = 1.0;
  spec.scale = 1.0;
  spec.row = 4;
  spec.col = 4;
  Image out = composite_watermark(base, a, spec);
  CHECK(out.at(4, 4, 0) == doctest::Approx(1.0));
  CHECK(out.at(11, 11, 2) == doctest::Approx(1.0));
  CHECK(out.at(3, 4, 0) == 0.f);

  // Hand evaluation: alpha 0.3, W=1, base=0 -> 0.3.
  spec.transparency = 0.3;
  Image out3 = composite_watermark(base, a, spec);
  CHECK(out3.at(6, 6, 1) == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("compositor leaves pixels outside the footprint bit-identical") {
  Image base = make_synthetic_scene(96, 96, SeedSpec(2, "fp"));
  auto assets = make_default_assets();
  CorruptionSpec spec;
  spec.transparency = 0.7;
  spec.scale = 0.5;
  spec.row = 10;
  spec.col = 12;
  int sh = static_cast<int>(std::lround(assets[6].height * spec.scale));
  int sw = static_cast<int>(std::lround(assets[6].width * spec.scale));
  Image out = composite_watermark(base, assets[6], spec);
  for (int r = 0; r < 96; ++r)
    for (int c = 0; c < 96; ++c) {
      bool inside = r >= spec.row && r < spec.row + sh && c >= spec.col && c < spec.col + sw;
      if (!inside)
        for (int ch = 0; ch < 3; ++ch) CHECK(out.at(r, c, ch) == base.at(r, c, ch));
    }
}

TEST_CASE("compositor output is monotone in transparency toward the mark") {
  WatermarkAsset a;
  a.height = a.width = 4;
  a.rgba.assign(4 * 4 * 4, 1.f);  // white, alpha 1
  Image base(16, 16, 0.25f);
  CorruptionSpec spec;
  spec.scale = 1.0;
  spec.row = spec.col = 2;
  double prev = 0.0;
  for (double t : {0.1, 0.3, 0.5, 0.8, 1.0}) {
    spec.transparency = t;
    Image out = composite_watermark(base, a, spec);
    CHECK(out.at(3, 3, 0) > prev);
    prev = out.at(3, 3, 0);
  }
  CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("compositor rejects out-of-bounds footprints") {
  Image base(32, 32, 0.5f);
  auto assets = make_default_assets();
  CorruptionSpec spec;
  spec.transparency = 0.5;
  spec.scale = 1.0;
  spec.row = 30;
  spec.col = 0;
  CHECK_THROWS_AS(composite_watermark(base, assets[0], spec), std::invalid_argument);
}

TEST_CASE("gaussian noise: determinism, zero sigma, statistics") {
  Image img(128, 128, 0.5f);
  CHECK(add_gaussian_noise(img, 0.0, SeedSpec(3, "n")).px == img.px);

  Image n1 = add_gaussian_noise(img, 25.0, SeedSpec(3, "n"));
  Image n2 = add_gaussian_noise(img, 25.0, SeedSpec(3, "n"));
  CHECK(n1.px == n2.px);
  Image n3 = add_gaussian_noise(img, 25.0, SeedSpec(4, "n"));
  CHECK(n1.px != n3.px);

  // Empirical std within 2% of sigma/255 on a 512x512 field.
  Image big(512, 512, 0.5f);
  Image noisy = add_gaussian_noise(big, 25.0, SeedSpec(5, "stats"));
  double sum = 0, sq = 0;
  for (size_t i = 0; i < big.px.size(); ++i) {
    double d = noisy.px[i] - big.px[i];
    sum += d;
    sq += d * d;
  }
  double n = static_cast<double>(big.px.size());
  double mean = sum / n;
  double stddev = std::sqrt(sq / n - mean * mean);
  double target = 25.0 / 255.0;
  CHECK(std::abs(stddev - target) < 0.02 * target);
  // Zero-mean within 3 sigma / sqrt(N).
  CHECK(std::abs(mean) < 3.0 * target / std::sqrt(n));

  CHECK_THROWS(add_gaussian_noise(img, -1.0, SeedSpec(6, "neg")));
}

TEST_CASE("make_sample invariants") {
  Image clean = make_synthetic_scene(192, 192, SeedSpec(7, "scene"));
  auto assets = make_default_assets();
  CorruptionRanges ranges;
  ranges.noise_sigma = DrawRange::discrete({25.0});
  ranges.transparency = DrawRange::discrete({0.3});
  SamplePair pair = make_sample(clean, assets, ranges, SeedSpec(8, "sample"));

  // x_wn = x_w + noise with the drawn sigma, reproducible from the seed.
  Image renoise = add_gaussian_noise(pair.x_w, pair.spec.noise_sigma,
                                     SeedSpec(8, "sample").fork("noise"));
  CHECK(pair.x_wn.px == renoise.px);

  // y_w agrees with x_w outside the extra watermark's footprint.
  int sh = static_cast<int>(
      std::lround(assets[pair.extra_spec.watermark_index].height * pair.extra_spec.scale));
  int sw = static_cast<int>(
      std::lround(assets[pair.extra_spec.watermark_index].width * pair.extra_spec.scale));
  for (int r = 0; r < 192; ++r)
    for (int c = 0; c < 192; ++c) {
      bool inside = r >= pair.extra_spec.row && r < pair.extra_spec.row + sh &&
                    c >= pair.extra_spec.col && c < pair.extra_spec.col + sw;
      if (!inside)
        for (int ch = 0; ch < 3; ++ch) REQUIRE(pair.y_w.at(r, c, ch) == pair.x_w.at(r, c, ch));
    }

  // Pixels outside the primary footprint match the clean image exactly.
  int ph = static_cast<int>(
      std::lround(assets[pair.spec.watermark_index].height * pair.spec.scale));
  int pw = static_cast<int>(
      std::lround(assets[pair.spec.watermark_index].width * pair.spec.scale));
  for (int r = 0; r < 192; r += 3)
    for (int c = 0; c < 192; c += 3) {
      bool inside = r >= pair.spec.row && r < pair.spec.row + ph && c >= pair.spec.col &&
                    c < pair.spec.col + pw;
      if (!inside)
        for (int ch = 0; ch < 3; ++ch)
          REQUIRE(pair.x_w.at(r, c, ch) == clean.at(r, c, ch));
    }

  // Coverage stays under the bound.
  CHECK(pair.spec.coverage <= ranges.coverage_max);
}

TEST_CASE("make_sample degenerate draws") {
  Image clean = make_synthetic_scene(192, 192, SeedSpec(9, "deg"));
  auto assets = make_default_assets();

  // No noise -> x_wn equals x_w exactly.
  CorruptionRanges r0;
  r0.noise_sigma = DrawRange::discrete({0.0});
  SamplePair p0 = make_sample(clean, assets, r0, SeedSpec(10, "p0"));
  CHECK(p0.x_wn.px == p0.x_w.px);

  // Zero transparency everywhere -> y_w == x_w == clean.
  CorruptionRanges rz;
  rz.noise_sigma = DrawRange::discrete({0.0});
  rz.transparency = DrawRange::discrete({0.0});
  SamplePair pz = make_sample(clean, assets, rz, SeedSpec(11, "pz"));
  CHECK(pz.x_w.px == clean.px);
  CHECK(pz.y_w.px == pz.x_w.px);

  // Determinism: identical seeds give identical pairs.
  SamplePair a = make_sample(clean, assets, r0, SeedSpec(12, "det"));
  SamplePair b = make_sample(clean, assets, r0, SeedSpec(12, "det"));
  CHECK(a.x_wn.px == b.x_wn.px);
  CHECK(a.y_w.px == b.y_w.px);
  CHECK(a.spec.row == b.spec.row);
}

TEST_CASE("golden sample: frozen hashes for a pinned draw") {
  // Frozen once from a verified compositor; any drift in the sampler, the
  // compositor, the noise stream or the scene generator shows up here.
  Image clean = make_synthetic_scene(192, 192, SeedSpec(77, "golden-scene"));
  auto assets = make_default_assets();
  CorruptionRanges r;
  r.noise_sigma = DrawRange::discrete({25.0});
  r.transparency = DrawRange::discrete({0.3});
  SamplePair pair =
      make_sample(clean, assets, r, SeedSpec(78, "golden"), PairingMode::literal, 3);
  CHECK(hash_image(clean) == 0xc07c231b7c377707ull);
  CHECK(hash_image(pair.x_w) == 0xaf5f2d6ea1fb1f92ull);
  CHECK(hash_image(pair.x_wn) == 0x7b41eb0446bea52dull);
  CHECK(hash_image(pair.y_w) == 0x4b9d93da1bb18140ull);
  CHECK(pair.spec.row == 65);
  CHECK(pair.spec.col == 14);
  CHECK(pair.extra_spec.watermark_index == 3);
}

TEST_CASE("pairing modes differ inside the primary footprint only") {
  Image clean = make_synthetic_scene(192, 192, SeedSpec(13, "pm"));
  auto assets = make_default_assets();
  CorruptionRanges r;
  r.noise_sigma = DrawRange::discrete({0.0});
  SamplePair lit = make_sample(clean, assets, r, SeedSpec(14, "pm"), PairingMode::literal);
  SamplePair ind = make_sample(clean, assets, r, SeedSpec(14, "pm"), PairingMode::independent);
  // Same extra watermark draw either way.
  CHECK(lit.extra_spec.row == ind.extra_spec.row);
  CHECK(lit.extra_spec.watermark_index == ind.extra_spec.watermark_index);
  // Literal mode re-watermarks x_w, independent mode re-watermarks the clean image.
  CHECK(lit.y_w.px != ind.y_w.px);
}

TEST_CASE("draw_spec fails with a diagnostic when nothing fits") {
  Image small(24, 24, 0.5f);
  auto assets = make_default_assets();
  CorruptionRanges r;
  r.max_placement_retries = 8;
  Rng rng(15, "nofit");
  CHECK_THROWS_WITH_AS(draw_spec(small, assets, r, rng, 5),
                       doctest::Contains("no valid placement"), std::runtime_error);
}

TEST_CASE("build_corpus: byte-identical regeneration and manifest layout") {
  auto dir = testsup::scratch_dir("synth_corpus");
  std::string img_dir = dir + "/images";
  fs::create_directories(img_dir);
  for (int i = 0; i < 2; ++i) {
    Image scene = make_synthetic_scene(192, 192, SeedSpec(20 + i, "corpus"));
    save_image(scene, img_dir + "/scene" + std::to_string(i) + ".png", BitDepth::u16);
  }
  auto assets = make_default_assets();

  CorpusOptions opt;
  opt.split = "test";
  opt.ranges.noise_sigma = DrawRange::discrete({25.0});
  opt.ranges.transparency = DrawRange::discrete({0.3});

  Manifest m1 = build_corpus(img_dir, assets, opt, dir + "/out1", SeedSpec(33, ""));
  Manifest m2 = build_corpus(img_dir, assets, opt, dir + "/out2", SeedSpec(33, ""));

  // 2 images x 12 assets in test mode.
  REQUIRE(m1.entries.size() == 24);
  CHECK(hash_file(dir + "/out1/manifest.jsonl") == hash_file(dir + "/out2/manifest.jsonl"));
  for (const auto& e : m1.entries) {
    CHECK(hash_file(m1.resolve(e.x_wn)) == hash_file(m2.resolve(e.x_wn)));
    CHECK(hash_file(m1.resolve(e.y_w)) == hash_file(m2.resolve(e.y_w)));
    CHECK_FALSE(e.y_clean.empty());  // test split carries the reference
    CHECK(e.spec.noise_sigma == 25.0);
    CHECK(e.spec.transparency == 0.3);
  }

  // Round trip through disk.
  Manifest loaded = Manifest::load(dir + "/out1/manifest.jsonl");
  REQUIRE(loaded.entries.size() == 24);
  CHECK(loaded.entries[0].id == m1.entries[0].id);
  CHECK(loaded.entries[0].spec.row == m1.entries[0].spec.row);

  // Stored pair preserves the additive noise model within 16-bit quantization.
  const auto& e0 = loaded.entries[0];
  Image x_wn = load_image(loaded.resolve(e0.x_wn));
  Image x_w = load_image(loaded.resolve(e0.x_w));
  Image renoise = add_gaussian_noise(
      x_w, e0.spec.noise_sigma, SeedSpec(33, "sample/" + e0.id).fork("noise"));
  double max_err = 0;
  for (size_t i = 0; i < x_wn.px.size(); ++i)
    max_err = std::max(max_err, static_cast<double>(std::abs(x_wn.px[i] - renoise.px[i])));
  CHECK(max_err < 3.0e-4);  // two 16-bit quantizations over a widened range
}

TEST_CASE("train split omits clean references") {
  auto dir = testsup::scratch_dir("synth_train");
  std::string img_dir = dir + "/images";
  fs::create_directories(img_dir);
  Image scene = make_synthetic_scene(192, 192, SeedSpec(40, "train"));
  save_image(scene, img_dir + "/s.png", BitDepth::u16);

  CorpusOptions opt;
  opt.split = "train";
  opt.variants_per_image = 3;
  Manifest m = build_corpus(img_dir, make_default_assets(), opt, dir + "/out",
                            SeedSpec(41, ""));
  REQUIRE(m.entries.size() == 3);
  for (const auto& e : m.entries) {
    CHECK(e.y_clean.empty());
    CHECK_FALSE(fs::exists(m.resolve(e.id + "/y_clean.png")));
    CHECK(fs::exists(m.resolve(e.x_wn)));
  }
}

TEST_CASE("empty image dir fails without partial output") {
  auto dir = testsup::scratch_dir("synth_empty");
  fs::create_directories(dir + "/none");
  CorpusOptions opt;
  CHECK_THROWS(build_corpus(dir + "/none", make_default_assets(), opt, dir + "/out",
                            SeedSpec(1, "")));
  CHECK_FALSE(fs::exists(dir + "/out/manifest.jsonl"));
}

TEST_SUITE_END();
