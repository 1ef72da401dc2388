#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "sshnet/image.hpp"
#include "sshnet/metrics.hpp"
#include "sshnet/rng.hpp"
#include "sshnet/synth.hpp"
#include "test_support.hpp"

using namespace sshnet;

namespace {

// Direct per-window SSIM, deliberately written as plain nested loops so it
// shares no code with the production implementation.
double ssim_reference(const Image& a, const Image& b) {
  auto x = to_luma_ycbcr(a);
  auto y = to_luma_ycbcr(b);
  const int h = a.height, w = a.width, n = 11;
  std::vector<double> k(n);
  double ks = 0;
  for (int i = 0; i < n; ++i) {
    double d = i - 5.0;
    k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    ks += k[i];
  }
  for (auto& v : k) v /= ks;
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int count = 0;
  for (int r = 0; r + n <= h; ++r)
    for (int c = 0; c + n <= w; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double wgt = k[i] * k[j];
          double xv = x[(r + i) * static_cast<size_t>(w) + c + j];
          double yv = y[(r + i) * static_cast<size_t>(w) + c + j];
          mx += wgt * xv;
          my += wgt * yv;
          sxx += wgt * xv * xv;
          syy += wgt * yv * yv;
          sxy += wgt * xv * yv;
        }
      double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace

TEST_SUITE_BEGIN("imgcore");

TEST_CASE("luma coefficients") {
  Image white(2, 2, 1.f), black(2, 2, 0.f), red(2, 2, 0.f);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) red.at(r, c, 0) = 1.f;
  CHECK(to_luma_ycbcr(white)[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(to_luma_ycbcr(black)[0] == doctest::Approx(0.0).epsilon(1e-12));
  // BT.601 red coefficient.
  CHECK(to_luma_ycbcr(red)[0] == doctest::Approx(0.299).epsilon(1e-12));
}

TEST_CASE("luma stays in [0,1] for inputs in [0,1]") {
  Image img = synth::make_synthetic_scene(32, 32, SeedSpec(7, "luma"));
  for (double v : to_luma_ycbcr(img)) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("psnr closed forms and sentinel") {
  Image a = synth::make_synthetic_scene(24, 24, SeedSpec(1, "psnr"));
  CHECK(std::isinf(psnr(a, a)));

  Image b = a;
  for (auto& v : b.px) v += 10.f / 255.f;
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0 / 10.0)).epsilon(1e-6));

  Image c = a;
  for (auto& v : c.px) v += 1.0f;
  CHECK(psnr(a, c) == doctest::Approx(0.0).epsilon(1e-6));

  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));

  Image wrong(12, 12);
  CHECK_THROWS(psnr(a, wrong));
}

TEST_CASE("psnr strictly decreasing in offset magnitude") {
  Image a = synth::make_synthetic_scene(24, 24, SeedSpec(2, "psnr-mono"));
  double prev = std::numeric_limits<double>::infinity();
  for (double off : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image b = a;
    for (auto& v : b.px) v += static_cast<float>(off);
    double p = psnr(a, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim identity and constants") {
  Image a = synth::make_synthetic_scene(32, 32, SeedSpec(3, "ssim"));
  CHECK(ssim_y(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  Image c1(16, 16, 0.5f), c2(16, 16, 0.5f);
  CHECK(ssim_y(c1, c2) == doctest::Approx(1.0).epsilon(1e-9));
  Image tiny(8, 8, 0.1f);
  CHECK_THROWS(ssim_y(tiny, tiny));
}

TEST_CASE("ssim against independent reference") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Image a = synth::make_synthetic_scene(40, 48, SeedSpec(seed, "ssim-ref-a"));
    Image b = a;
    Rng rng(seed, "ssim-ref-noise");
    for (auto& v : b.px) v = static_cast<float>(v + rng.normal(0.0, 0.05));
    CHECK(ssim_y(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-4));
  }
}

TEST_CASE("ssim of inverted image is low") {
  Image a = synth::make_synthetic_scene(48, 48, SeedSpec(4, "ssim-inv"));
  Image inv = a;
  for (auto& v : inv.px) v = 1.f - v;
  CHECK(ssim_y(a, inv) < 0.5);
}

TEST_CASE("png roundtrip 8/16-bit") {
  auto dir = testsup::scratch_dir("imgcore_png");
  Image img = synth::make_synthetic_scene(37, 23, SeedSpec(5, "png"));

  save_image(img, dir + "/a8.png", BitDepth::u8);
  Image a8 = load_image(dir + "/a8.png");
  REQUIRE(a8.height == 37);
  REQUIRE(a8.width == 23);
  float max_err = 0;
  for (size_t i = 0; i < img.px.size(); ++i)
    max_err = std::max(max_err, std::abs(a8.px[i] - img.px[i]));
  CHECK(max_err <= 1.f / 510.f + 1e-6f);

  save_image(img, dir + "/a16.png", BitDepth::u16);
  Image a16 = load_image(dir + "/a16.png");
  max_err = 0;
  for (size_t i = 0; i < img.px.size(); ++i)
    max_err = std::max(max_err, std::abs(a16.px[i] - img.px[i]));
  CHECK(max_err <= 1.f / 131070.f + 1e-7f);
}

TEST_CASE("png clamps out-of-range values on save") {
  auto dir = testsup::scratch_dir("imgcore_clamp");
  Image img(4, 4, 0.5f);
  img.at(0, 0, 0) = -0.5f;
  img.at(1, 1, 1) = 1.7f;
  save_image(img, dir + "/c.png");
  Image back = load_image(dir + "/c.png");
  CHECK(back.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(back.at(1, 1, 1) == doctest::Approx(1.0));
}

TEST_CASE("ranged 16-bit png preserves unclamped values") {
  auto dir = testsup::scratch_dir("imgcore_ranged");
  Image img = synth::make_synthetic_scene(20, 20, SeedSpec(6, "ranged"));
  img.at(0, 0, 0) = -0.31f;
  img.at(2, 3, 1) = 1.42f;
  save_image_ranged(img, dir + "/r.png");
  Image back = load_image(dir + "/r.png");
  // Half a quantization step over the stored affine range.
  float step = (1.42f + 0.31f) / 65535.f;
  for (size_t i = 0; i < img.px.size(); ++i)
    CHECK(std::abs(back.px[i] - img.px[i]) <= step);
}

TEST_CASE("asset roundtrip keeps alpha") {
  auto dir = testsup::scratch_dir("imgcore_asset");
  auto assets = synth::make_default_assets();
  save_asset(assets[0], dir + "/w.png");
  WatermarkAsset back = load_asset(dir + "/w.png");
  REQUIRE(back.height == assets[0].height);
  REQUIRE(back.width == assets[0].width);
  float max_err = 0;
  for (size_t i = 0; i < back.rgba.size(); ++i)
    max_err = std::max(max_err, std::abs(back.rgba[i] - assets[0].rgba[i]));
  CHECK(max_err <= 1.f / 510.f + 1e-6f);
}

TEST_CASE("seeded streams are reproducible and order-independent") {
  Rng a(42, "stream/x");
  Rng b(42, "stream/x");
  Rng c(42, "stream/y");
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_diff = any_diff || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // Draws on one stream do not perturb another.
  Rng d1(42, "stream/x");
  Rng other(42, "stream/z");
  (void)other.next_u64();
  Rng d2(42, "stream/x");
  CHECK(d1.next_u64() == d2.next_u64());
}

TEST_CASE("normal draws match requested moments") {
  Rng rng(9, "normal");
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal(0.0, 2.0);
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(std::sqrt(var) - 2.0) < 0.02);
}

TEST_SUITE_END();
