#include <doctest.h>

#include <cmath>

#include "sshnet/losses.hpp"
#include "sshnet/synth.hpp"
#include "test_support.hpp"

using namespace sshnet;
using nn::Var;
using testsup::random_tensor;

namespace {

template <typename T>
SshNetOutputs<T> fake_outputs(uint64_t seed, std::vector<int> shape, double lo = 0.1,
                              double hi = 0.9) {
  SshNetOutputs<T> outs;
  outs.y_n = Var<T>(random_tensor<T>(shape, seed + 1, lo, hi), true);
  outs.y_wn = Var<T>(random_tensor<T>(shape, seed + 2, lo, hi), true);
  outs.y_hat = Var<T>(random_tensor<T>(shape, seed + 3, lo, hi), true);
  return outs;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("structural loss: perfect outputs give zeros") {
  auto x_w = Var<float>(random_tensor<float>({2, 3, 8, 8}, 1, 0.0, 1.0));
  auto y_w = Var<float>(random_tensor<float>({2, 3, 8, 8}, 2, 0.0, 1.0));
  SshNetOutputs<float> outs;
  outs.y_n = x_w;
  outs.y_wn = y_w;
  outs.y_hat = y_w;
  auto ls = structural_loss(outs, x_w, y_w);
  CHECK(ls[0].val().v[0] == 0.f);
  CHECK(ls[1].val().v[0] == 0.f);
  CHECK(ls[2].val().v[0] == 0.f);
}

TEST_CASE("structural loss: constant offset gives the offset") {
  auto x_w = Var<float>(random_tensor<float>({1, 3, 8, 8}, 3, 0.0, 0.8));
  auto y_w = x_w;
  SshNetOutputs<float> outs;
  auto shifted = random_tensor<float>({1, 3, 8, 8}, 3, 0.0, 0.8);
  for (auto& v : shifted.v) v += 0.1f;
  outs.y_n = Var<float>(shifted);
  outs.y_wn = x_w;
  outs.y_hat = x_w;
  auto ls = structural_loss(outs, x_w, y_w);
  CHECK(ls[0].val().v[0] == doctest::Approx(0.1).epsilon(1e-5));
}

TEST_CASE("structural loss matches an independent elementwise oracle") {
  auto outs = fake_outputs<double>(10, {2, 3, 6, 6});
  auto x_w = Var<double>(random_tensor<double>({2, 3, 6, 6}, 20, 0.0, 1.0));
  auto y_w = Var<double>(random_tensor<double>({2, 3, 6, 6}, 21, 0.0, 1.0));
  auto ls = structural_loss(outs, x_w, y_w);

  auto oracle = [](const nn::Tensor<double>& a, const nn::Tensor<double>& b) {
    double acc = 0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a.v[i] - b.v[i]);
    return acc / a.numel();
  };
  CHECK(ls[0].val().v[0] ==
        doctest::Approx(oracle(outs.y_n.val(), x_w.val())).epsilon(1e-7));
  CHECK(ls[1].val().v[0] ==
        doctest::Approx(oracle(outs.y_wn.val(), y_w.val())).epsilon(1e-7));
  CHECK(ls[2].val().v[0] ==
        doctest::Approx(oracle(outs.y_hat.val(), y_w.val())).epsilon(1e-7));
}

TEST_CASE("texture loss: identical inputs give zeros; swap symmetry") {
  auto fx = FeatureExtractor::make_random({4, 8}, 7);
  auto y_w = Var<double>(random_tensor<double>({1, 3, 8, 8}, 30, 0.1, 0.9));
  SshNetOutputs<double> outs;
  outs.y_wn = y_w;
  outs.y_hat = y_w;
  auto lt = texture_loss(outs, y_w, fx);
  CHECK(lt[0].val().v[0] == doctest::Approx(0.0));
  CHECK(lt[1].val().v[0] == doctest::Approx(0.0));

  // Swapping y_wn and y_hat swaps l_t1 and l_t2 exactly.
  auto a = Var<double>(random_tensor<double>({1, 3, 8, 8}, 31, 0.1, 0.9));
  auto b = Var<double>(random_tensor<double>({1, 3, 8, 8}, 32, 0.1, 0.9));
  SshNetOutputs<double> o1, o2;
  o1.y_wn = a;
  o1.y_hat = b;
  o2.y_wn = b;
  o2.y_hat = a;
  auto l1 = texture_loss(o1, y_w, fx);
  auto l2 = texture_loss(o2, y_w, fx);
  CHECK(l1[0].val().v[0] == l2[1].val().v[0]);
  CHECK(l1[1].val().v[0] == l2[0].val().v[0]);
}

TEST_CASE("mixed loss arithmetic and alpha scaling") {
  auto fx = FeatureExtractor::make_random({4}, 8);
  auto outs = fake_outputs<double>(40, {1, 3, 8, 8});
  auto x_w = Var<double>(random_tensor<double>({1, 3, 8, 8}, 50, 0.1, 0.9));
  auto y_w = Var<double>(random_tensor<double>({1, 3, 8, 8}, 51, 0.1, 0.9));

  auto g = mixed_loss(outs, x_w, y_w, 0.024, &fx);
  double ls = g.values.l_s1 + g.values.l_s2 + g.values.l_s3;
  double lt = g.values.l_t1 + g.values.l_t2;
  CHECK(g.values.total == doctest::Approx(ls + 0.024 * lt).epsilon(1e-6));

  // alpha = 0 drops the texture term and needs no extractor.
  auto g0 = mixed_loss(outs, x_w, y_w, 0.0, nullptr);
  CHECK(g0.values.total == doctest::Approx(ls).epsilon(1e-6));
  CHECK(g0.values.l_t1 == 0.0);

  // Scaling alpha by c scales (total - l_s) by c.
  auto g2 = mixed_loss(outs, x_w, y_w, 0.048, &fx);
  CHECK((g2.values.total - ls) == doctest::Approx(2.0 * (g.values.total - ls)).epsilon(1e-6));

  // Requesting texture without an extractor is an error.
  CHECK_THROWS_AS(mixed_loss(outs, x_w, y_w, 0.5, nullptr), std::invalid_argument);
}

TEST_CASE("mixed loss total is non-negative and zero iff perfect") {
  auto fx = FeatureExtractor::make_random({4}, 9);
  auto y_w = Var<float>(random_tensor<float>({1, 3, 8, 8}, 60, 0.1, 0.9));
  auto x_w = Var<float>(random_tensor<float>({1, 3, 8, 8}, 61, 0.1, 0.9));
  SshNetOutputs<float> perfect;
  perfect.y_n = x_w;
  perfect.y_wn = y_w;
  perfect.y_hat = y_w;
  auto g = mixed_loss(perfect, x_w, y_w, 0.024, &fx);
  CHECK(g.values.total == 0.0);

  auto outs = fake_outputs<float>(62, {1, 3, 8, 8});
  auto g2 = mixed_loss(outs, x_w, y_w, 0.024, &fx);
  CHECK(g2.values.total > 0.0);
  CHECK(g2.values.l_s1 >= 0.0);
  CHECK(g2.values.l_t1 >= 0.0);
}

TEST_CASE("mixed loss gradient vs finite differences (with texture term)") {
  auto fx = FeatureExtractor::make_random({4}, 10);
  auto outs = fake_outputs<double>(70, {1, 3, 8, 8}, 0.2, 0.8);
  auto x_w = Var<double>(random_tensor<double>({1, 3, 8, 8}, 80, 0.2, 0.8));
  auto y_w = Var<double>(random_tensor<double>({1, 3, 8, 8}, 81, 0.2, 0.8));
  double err = testsup::fd_max_rel_error(
      [&] { return mixed_loss(outs, x_w, y_w, 0.1, &fx).total; },
      {outs.y_n, outs.y_wn, outs.y_hat});
  CHECK(err < 1e-4);
}

TEST_CASE("variant losses use the outputs that exist") {
  auto y_w = Var<float>(random_tensor<float>({1, 3, 8, 8}, 90, 0.1, 0.9));
  auto x_w = Var<float>(random_tensor<float>({1, 3, 8, 8}, 91, 0.1, 0.9));

  SshNetOutputs<float> nrd_only;
  nrd_only.y_n = Var<float>(random_tensor<float>({1, 3, 8, 8}, 92, 0.1, 0.9), true);
  auto ga = mixed_loss(nrd_only, x_w, y_w, 0.0, nullptr, Variant::se_nrd_only);
  CHECK(ga.values.l_s2 > 0.0);
  CHECK(ga.values.l_s1 == 0.0);

  SshNetOutputs<float> dual;
  dual.y_n = Var<float>(random_tensor<float>({1, 3, 8, 8}, 93, 0.1, 0.9), true);
  dual.y_wn = Var<float>(random_tensor<float>({1, 3, 8, 8}, 94, 0.1, 0.9), true);
  auto gc = mixed_loss(dual, x_w, y_w, 0.0, nullptr, Variant::dual_no_ffu);
  CHECK(gc.values.l_s1 > 0.0);
  CHECK(gc.values.l_s2 > 0.0);
  CHECK(gc.values.l_s3 == 0.0);
}

TEST_CASE("extractor file roundtrip and lpips basics") {
  auto dir = testsup::scratch_dir("losses_fx");
  auto fx = FeatureExtractor::make_random({4, 8}, 11);
  fx.save(dir + "/fx.bin");
  auto back = FeatureExtractor::load(dir + "/fx.bin");
  REQUIRE(back.layer_count() == fx.layer_count());

  Image a = synth::make_synthetic_scene(32, 32, SeedSpec(12, "lpips"));
  CHECK(lpips(a, a, back) == doctest::Approx(0.0));

  // More noise, larger distance (monotonicity on one fixed image).
  Image n15 = clamp01(synth::add_gaussian_noise(a, 15.0, SeedSpec(13, "n15")));
  Image n50 = clamp01(synth::add_gaussian_noise(a, 50.0, SeedSpec(13, "n50")));
  CHECK(lpips(a, n50, back) > lpips(a, n15, back));

  // Graceful absence.
  CHECK_FALSE(lpips_if_available(a, a, dir + "/missing.bin").has_value());
  CHECK(lpips_if_available(a, a, dir + "/fx.bin").has_value());
}

TEST_SUITE_END();
