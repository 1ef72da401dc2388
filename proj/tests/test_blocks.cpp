#include <doctest.h>

#include <cmath>

#include "sshnet/nn/blocks.hpp"
#include "test_support.hpp"

using namespace sshnet;
using nn::Var;
using testsup::fd_max_rel_error;
using testsup::random_tensor;

namespace {

// Zero every parameter except the attention temperatures, which are scale
// factors rather than additive weights (a zero temperature is degenerate).
template <typename T>
void zero_params(nn::ParamRegistry<T>& reg) {
  for (auto& p : reg.all()) {
    if (p.name().size() >= 7 && p.name().substr(p.name().size() - 7) == ".lambda") continue;
    std::fill(p.val().v.begin(), p.val().v.end(), T(0));
  }
}

}  // namespace

TEST_SUITE_BEGIN("blocks");

TEST_CASE("nafblock: zero parameters give the identity") {
  nn::ParamRegistry<float> reg(1);
  nn::NafBlock<float> block(reg, "b", 8);
  zero_params(reg);
  auto x = Var<float>(random_tensor<float>({2, 8, 6, 6}, 5));
  auto y = block(x);
  CHECK(y.val().v == x.val().v);
}

TEST_CASE("nafblock preserves shape for any spatial size") {
  nn::ParamRegistry<float> reg(2);
  nn::NafBlock<float> block(reg, "b", 6);
  for (auto [h, w] : {std::pair{4, 4}, {5, 9}, {16, 3}}) {
    auto x = Var<float>(random_tensor<float>({1, 6, h, w}, 6));
    CHECK(block(x).val().shape == std::vector<int>{1, 6, h, w});
  }
}

TEST_CASE("nafblock gradient vs finite differences") {
  nn::ParamRegistry<double> reg(3);
  nn::NafBlock<double> block(reg, "b", 8);
  auto x = Var<double>(random_tensor<double>({1, 8, 6, 6}, 7), true);
  std::vector<Var<double>> leaves = {x};
  for (auto& p : reg.all()) leaves.push_back(p);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(block(x), 2001); }, leaves) < 1e-4);
}

TEST_CASE("sca gain is invariant to spatial permutation") {
  nn::ParamRegistry<float> reg(4);
  nn::Sca<float> sca(reg, "s", 4);
  auto xt = random_tensor<float>({1, 4, 4, 4}, 8, 0.2, 1.0);
  // Permute pixels within each channel (reverse order).
  auto pt = xt;
  for (int c = 0; c < 4; ++c) {
    float* src = xt.chan(0, c);
    float* dst = pt.chan(0, c);
    for (int i = 0; i < 16; ++i) dst[i] = src[15 - i];
  }
  // The gain vector equals output/input elementwise; it must not change.
  auto y1 = sca(Var<float>(xt));
  auto y2 = sca(Var<float>(pt));
  for (int c = 0; c < 4; ++c) {
    float g1 = y1.val().chan(0, c)[0] / xt.chan(0, c)[0];
    float g2 = y2.val().chan(0, c)[0] / pt.chan(0, c)[0];
    CHECK(g1 == doctest::Approx(g2).epsilon(1e-5));
  }
}

TEST_CASE("stb: zero parameters give the identity") {
  nn::ParamRegistry<float> reg(9);
  nn::Stb<float> block(reg, "t", 8, 2, {0.5, 0.75}, 2.66);
  zero_params(reg);
  auto x = Var<float>(random_tensor<float>({1, 8, 5, 5}, 10));
  auto y = block(x);
  CHECK(y.val().v == x.val().v);
}

TEST_CASE("stb gradient vs finite differences") {
  nn::ParamRegistry<double> reg(11);
  nn::Stb<double> block(reg, "t", 8, 2, {0.5, 0.75}, 1.5);
  auto x = Var<double>(random_tensor<double>({1, 8, 4, 4}, 12), true);
  std::vector<Var<double>> leaves = {x};
  for (auto& p : reg.all()) leaves.push_back(p);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(block(x), 2002); }, leaves) < 1e-4);
}

TEST_CASE("gdfn hidden width uses the floor of the expansion") {
  nn::ParamRegistry<float> reg(13);
  nn::Gdfn<float> ffn(reg, "f", 48, 2.66);
  CHECK(ffn.hidden == 127);  // floor(2.66 * 48)
  nn::Gdfn<float> ffn2(reg, "f2", 96, 2.66);
  CHECK(ffn2.hidden == 255);
}

TEST_CASE("ssa is deterministic across repeated runs") {
  nn::ParamRegistry<float> reg(14);
  nn::Ssa<float> ssa(reg, "a", 8, 2, {0.5, 1.0});
  auto xt = random_tensor<float>({1, 8, 5, 5}, 15);
  auto y1 = ssa(Var<float>(xt));
  auto y2 = ssa(Var<float>(xt));
  CHECK(y1.val().v == y2.val().v);
}

TEST_CASE("top-k selection convention switch changes the result") {
  nn::ParamRegistry<float> reg(20);
  nn::Ssa<float> ssa(reg, "a", 8, 2, {0.5});
  auto xt = random_tensor<float>({1, 8, 5, 5}, 21);
  auto row_mode = ssa(Var<float>(xt));
  ssa.select_input_columns = true;
  auto col_mode = ssa(Var<float>(xt));
  CHECK(row_mode.val().v != col_mode.val().v);
  for (float v : col_mode.val().v) CHECK(std::isfinite(v));
}

TEST_CASE("downsample/upsample shape contracts") {
  nn::ParamRegistry<float> reg(16);
  nn::Downsample<float> down(reg, "d", 48, 48);
  nn::Upsample<float> up(reg, "u", 48, 48);
  auto x = Var<float>(random_tensor<float>({1, 48, 8, 8}, 17));
  auto y = down(x);
  REQUIRE(y.val().shape == std::vector<int>{1, 48, 4, 4});
  auto z = up(y);
  CHECK(z.val().shape == std::vector<int>{1, 48, 8, 8});

  // Channel-doubling rule inside the transformer U-Net.
  nn::Downsample<float> down2(reg, "d2", 96, 192);
  auto x2 = Var<float>(random_tensor<float>({1, 96, 16, 16}, 18));
  CHECK(down2(x2).val().shape == std::vector<int>{1, 192, 8, 8});

  auto odd = Var<float>(random_tensor<float>({1, 48, 7, 8}, 19));
  CHECK_THROWS(down(odd));
}

TEST_CASE("parameter registry: count is pure and init is name-keyed") {
  nn::ParamRegistry<float> r1(42), r2(42);
  nn::NafBlock<float> b1(r1, "x", 8);
  nn::NafBlock<float> b2(r2, "x", 8);
  CHECK(r1.param_count() == r2.param_count());
  for (size_t i = 0; i < r1.all().size(); ++i)
    CHECK(r1.all()[i].val().v == r2.all()[i].val().v);

  // Different seed, different conv weights.
  nn::ParamRegistry<float> r3(43);
  nn::NafBlock<float> b3(r3, "x", 8);
  CHECK(r1.find("x.conv1.w")->val().v != r3.find("x.conv1.w")->val().v);
}

TEST_SUITE_END();
