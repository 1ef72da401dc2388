#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sshnet/nn/ops.hpp"
#include "test_support.hpp"

using namespace sshnet;
using nn::Var;
using testsup::fd_max_rel_error;
using testsup::random_tensor;

namespace {

// Dense transposed attention written independently of ssa_core: plain loops,
// full softmax, no masking. Serves as the MDTA oracle.
void mdta_oracle(const nn::Tensor<double>& q, const nn::Tensor<double>& k,
                 const nn::Tensor<double>& v, int heads, const std::vector<double>& lambda,
                 nn::Tensor<double>& out) {
  const int n = q.n(), c = q.c();
  const int d = c / heads;
  const int64_t hw = q.plane();
  out = nn::Tensor<double>(q.shape);
  for (int in = 0; in < n; ++in)
    for (int h = 0; h < heads; ++h) {
      std::vector<std::vector<double>> qn(d, std::vector<double>(hw)), kn = qn;
      for (int i = 0; i < d; ++i) {
        const double* qr = q.chan(in, h * d + i);
        const double* kr = k.chan(in, h * d + i);
        double nq = 1e-12, nk = 1e-12;
        for (int64_t t = 0; t < hw; ++t) {
          nq += qr[t] * qr[t];
          nk += kr[t] * kr[t];
        }
        nq = std::sqrt(nq);
        nk = std::sqrt(nk);
        for (int64_t t = 0; t < hw; ++t) {
          qn[i][t] = qr[t] / nq;
          kn[i][t] = kr[t] / nk;
        }
      }
      for (int i = 0; i < d; ++i) {
        std::vector<double> row(d);
        for (int j = 0; j < d; ++j) {
          double s = 0;
          for (int64_t t = 0; t < hw; ++t) s += qn[i][t] * kn[j][t];
          row[j] = s / lambda[h];
        }
        double mx = *std::max_element(row.begin(), row.end());
        double sum = 0;
        for (double& r : row) {
          r = std::exp(r - mx);
          sum += r;
        }
        for (double& r : row) r /= sum;
        double* oc = out.chan(in, h * d + i);
        for (int64_t t = 0; t < hw; ++t) {
          double acc = 0;
          for (int j = 0; j < d; ++j) acc += row[j] * v.chan(in, h * d + j)[t];
          oc[t] = acc;
        }
      }
    }
}

// Full argsort top-k oracle: stable sort by (value desc, index asc).
std::vector<uint8_t> topk_oracle(const std::vector<double>& row, int k) {
  std::vector<int> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return a < b;
  });
  std::vector<uint8_t> mask(row.size(), 0);
  for (int i = 0; i < k && i < static_cast<int>(row.size()); ++i) mask[idx[i]] = 1;
  return mask;
}

}  // namespace

TEST_SUITE_BEGIN("engine");

TEST_CASE("elementwise ops gradients") {
  auto a = Var<double>(random_tensor<double>({2, 3, 4, 4}, 11), true);
  auto b = Var<double>(random_tensor<double>({2, 3, 4, 4}, 12), true);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::mul(nn::add(a, b), b), 1011); },
                         {a, b}) < 1e-5);
  CHECK(fd_max_rel_error(
            [&] { return testsup::fd_loss(nn::scale(nn::sub(a, b), 0.37), 1012); }, {a, b}) <
        1e-6);
}

TEST_CASE("activation gradients") {
  auto x = Var<double>(random_tensor<double>({1, 4, 5, 5}, 13), true);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::gelu(x), 1013); }, {x}) < 1e-5);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::sigmoid(x), 1014); }, {x}) < 1e-5);
}

TEST_CASE("conv2d forward closed form") {
  // A single 1x1 conv with known weights.
  nn::Tensor<double> xt({1, 2, 2, 2});
  std::iota(xt.v.begin(), xt.v.end(), 1.0);  // 1..8
  nn::Tensor<double> wt({1, 2, 1, 1});
  wt.v = {2.0, -1.0};
  nn::Tensor<double> bt({1});
  bt.v = {0.5};
  auto y = nn::conv2d(Var<double>(xt), Var<double>(wt), Var<double>(bt));
  // y = 2*x0 - x1 + 0.5 per pixel; x1 plane starts at 5.
  CHECK(y.val().v[0] == doctest::Approx(2 * 1 - 5 + 0.5));
  CHECK(y.val().v[3] == doctest::Approx(2 * 4 - 8 + 0.5));
}

TEST_CASE("conv2d gradients: pointwise, depthwise, strided, grouped") {
  auto x = Var<double>(random_tensor<double>({2, 4, 6, 6}, 21), true);

  SUBCASE("pointwise") {
    auto w = Var<double>(random_tensor<double>({6, 4, 1, 1}, 22), true);
    auto b = Var<double>(random_tensor<double>({6}, 23), true);
    CHECK(fd_max_rel_error(
              [&] { return testsup::fd_loss(nn::conv2d(x, w, b), 1021); }, {x, w, b}) < 1e-5);
  }
  SUBCASE("depthwise 3x3") {
    auto w = Var<double>(random_tensor<double>({4, 1, 3, 3}, 24), true);
    auto b = Var<double>(random_tensor<double>({4}, 25), true);
    CHECK(fd_max_rel_error(
              [&] { return testsup::fd_loss(nn::conv2d(x, w, b, 1, 1, 4), 1022); },
              {x, w, b}) < 1e-5);
  }
  SUBCASE("strided 3x3") {
    auto w = Var<double>(random_tensor<double>({6, 4, 3, 3}, 26), true);
    auto b = Var<double>(random_tensor<double>({6}, 27), true);
    CHECK(fd_max_rel_error(
              [&] { return testsup::fd_loss(nn::conv2d(x, w, b, 2, 1, 1), 1023); },
              {x, w, b}) < 1e-5);
  }
  SUBCASE("two groups") {
    auto w = Var<double>(random_tensor<double>({4, 2, 3, 3}, 28), true);
    auto b = Var<double>(random_tensor<double>({4}, 29), true);
    CHECK(fd_max_rel_error(
              [&] { return testsup::fd_loss(nn::conv2d(x, w, b, 1, 1, 2), 1024); },
              {x, w, b}) < 1e-5);
  }
}

TEST_CASE("layer norm: definition and gradient") {
  auto x = Var<double>(random_tensor<double>({2, 5, 3, 3}, 31), true);
  auto g = Var<double>(random_tensor<double>({5}, 32, 0.5, 1.5), true);
  auto b = Var<double>(random_tensor<double>({5}, 33), true);
  auto y = nn::layer_norm_chan(x, g, b);

  // Per-location channel mean of the normalized output is ~0 when gamma=1, beta=0.
  auto ones = Var<double>(nn::Tensor<double>({5}, 1.0));
  auto zeros = Var<double>(nn::Tensor<double>({5}, 0.0));
  auto yn = nn::layer_norm_chan(x, ones, zeros);
  for (int64_t i = 0; i < x.val().plane(); ++i) {
    double mean = 0;
    for (int c = 0; c < 5; ++c) mean += yn.val().chan(0, c)[i];
    CHECK(std::abs(mean / 5) < 1e-5);
  }

  CHECK(fd_max_rel_error(
            [&] { return testsup::fd_loss(nn::layer_norm_chan(x, g, b), 1031); },
            {x, g, b}) < 1e-5);
}

TEST_CASE("layer norm on constant-channel input yields bias") {
  nn::Tensor<double> xt({1, 4, 2, 2}, 3.7);  // same value in every channel
  auto g = Var<double>(random_tensor<double>({4}, 34));
  nn::Tensor<double> bt({4});
  bt.v = {0.1, 0.2, 0.3, 0.4};
  auto y = nn::layer_norm_chan(Var<double>(xt), g, Var<double>(bt));
  for (int c = 0; c < 4; ++c)
    CHECK(y.val().chan(0, c)[0] == doctest::Approx(bt.v[c]).epsilon(1e-9));
}

TEST_CASE("simple gate semantics and gradient") {
  nn::Tensor<double> xt({1, 4, 2, 2});
  for (int64_t i = 0; i < 8; ++i) xt.v[i] = 2.0;        // first half
  for (int64_t i = 8; i < 16; ++i) xt.v[i] = 3.0;       // second half
  auto y = nn::simple_gate(Var<double>(xt));
  CHECK(y.val().c() == 2);
  for (double v : y.val().v) CHECK(v == doctest::Approx(6.0));

  auto x = Var<double>(random_tensor<double>({2, 6, 3, 3}, 41), true);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::simple_gate(x), 1041); }, {x}) <
        1e-6);

  nn::Tensor<double> odd({1, 3, 2, 2});
  CHECK_THROWS(nn::simple_gate(Var<double>(odd)));
}

TEST_CASE("pooling and broadcast ops") {
  auto x = Var<double>(random_tensor<double>({2, 3, 4, 4}, 51), true);
  auto g = Var<double>(random_tensor<double>({2, 3, 1, 1}, 52), true);
  CHECK(fd_max_rel_error(
            [&] { return testsup::fd_loss(nn::mul_bcast_c(x, g), 1051); }, {x, g}) < 1e-5);
  CHECK(fd_max_rel_error(
            [&] { return testsup::fd_loss(nn::global_avg_pool(x), 1052); }, {x}) < 1e-5);
}

TEST_CASE("pixel shuffle inverts downsampling shape and is exact") {
  auto x = Var<double>(random_tensor<double>({1, 8, 3, 3}, 61), true);
  auto y = nn::pixel_shuffle2(x);
  REQUIRE(y.val().shape == std::vector<int>{1, 2, 6, 6});
  // Linear permutation: gradient check is near-exact.
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::pixel_shuffle2(x), 1061); }, {x}) <
        1e-6);
}

TEST_CASE("concat/slice/maxpool gradients") {
  auto a = Var<double>(random_tensor<double>({1, 2, 4, 4}, 71), true);
  auto b = Var<double>(random_tensor<double>({1, 3, 4, 4}, 72), true);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::concat_c(a, b), 1071); }, {a, b}) <
        1e-6);
  CHECK(fd_max_rel_error(
            [&] { return testsup::fd_loss(nn::slice_c(nn::concat_c(a, b), 1, 2), 1072); },
            {a, b}) < 1e-5);
  CHECK(fd_max_rel_error([&] { return testsup::fd_loss(nn::maxpool2(a), 1073); }, {a}) < 1e-5);
}

TEST_CASE("clamp01 and channel_affine") {
  nn::Tensor<double> xt({1, 2, 2, 2});
  xt.v = {-0.5, 0.3, 1.4, 0.9, 0.1, 0.2, 0.7, 2.0};
  auto y = nn::clamp01(Var<double>(xt));
  CHECK(y.val().v[0] == 0.0);
  CHECK(y.val().v[2] == 1.0);
  CHECK(y.val().v[1] == doctest::Approx(0.3));

  auto x = Var<double>(random_tensor<double>({1, 3, 3, 3}, 81, 0.1, 0.9), true);
  CHECK(fd_max_rel_error(
            [&] {
              return testsup::fd_loss(
                  nn::channel_affine(nn::clamp01(x), {2.0, 3.0, 4.0}, {0.1, 0.2, 0.3}), 1081);
            },
            {x}) < 1e-5);
}

TEST_CASE("top-k mask matches the argsort oracle") {
  Rng rng(99, "topk");
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 4 + static_cast<int>(rng.uniform_int(0, 20));
    int k = 1 + static_cast<int>(rng.uniform_int(0, d - 1));
    std::vector<double> row(d);
    for (auto& v : row) v = rng.uniform(-2, 2);
    // Inject ties on a third of the trials.
    if (trial % 3 == 0 && d >= 4) {
      row[1] = row[3] = row[0];
    }
    std::vector<uint8_t> mask(d);
    nn::topk_mask_row(row.data(), d, k, mask.data());
    auto expect = topk_oracle(row, k);
    CHECK(mask == expect);
    CHECK(std::accumulate(mask.begin(), mask.end(), 0) == k);
  }
}

TEST_CASE("ssa_core: dense limit equals the MDTA oracle") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto q = random_tensor<double>({1, 8, 3, 3}, 100 + seed);
    auto k = random_tensor<double>({1, 8, 3, 3}, 200 + seed);
    auto v = random_tensor<double>({1, 8, 3, 3}, 300 + seed);
    auto lambda = nn::Tensor<double>({2});
    lambda.v = {0.8, 1.3};
    auto y = nn::ssa_core(Var<double>(q), Var<double>(k), Var<double>(v), 2,
                          Var<double>(lambda), {1.0, 1.0, 1.0, 1.0});
    nn::Tensor<double> expect;
    mdta_oracle(q, k, v, 2, {0.8, 1.3}, expect);
    for (int64_t i = 0; i < y.val().numel(); ++i)
      CHECK(y.val().v[i] == doctest::Approx(expect.v[i]).epsilon(1e-9));
  }
}

TEST_CASE("ssa_core: masked softmax rows sum to one with hard zeros") {
  auto q = random_tensor<double>({1, 12, 4, 4}, 401);
  auto k = random_tensor<double>({1, 12, 4, 4}, 402);
  auto lambda = nn::Tensor<double>({2}, 1.0);
  const int d = 6;

  // With V identically 1, each output value equals its softmax row sum.
  auto ones = nn::Tensor<double>({1, 12, 4, 4}, 1.0);
  std::vector<std::vector<std::vector<uint8_t>>> masks;
  auto y = nn::ssa_core(Var<double>(q), Var<double>(k), Var<double>(ones), 2,
                        Var<double>(lambda), {0.5, 5.0 / 6.0}, false, &masks);
  for (double val : y.val().v) CHECK(val == doctest::Approx(1.0).epsilon(1e-9));

  // Kept-count per branch: ceil(rate * d) = 3 and 5.
  REQUIRE(masks.size() == 2);
  for (size_t b = 0; b < masks.size(); ++b) {
    int expected_k = b == 0 ? 3 : 5;
    for (const auto& m : masks[b]) {
      for (int row = 0; row < d; ++row) {
        int cnt = 0;
        for (int col = 0; col < d; ++col) cnt += m[row * d + col];
        CHECK(cnt == expected_k);
      }
    }
  }

  // One-hot V isolates a single probability column: pruned entries must be
  // exactly zero in the output (single branch so no averaging).
  for (int j = 0; j < d; ++j) {
    auto onehot = nn::Tensor<double>({1, 12, 4, 4});
    for (int h = 0; h < 2; ++h)
      for (int64_t t = 0; t < onehot.plane(); ++t) onehot.chan(0, h * d + j)[t] = 1.0;
    std::vector<std::vector<std::vector<uint8_t>>> m1;
    auto yj = nn::ssa_core(Var<double>(q), Var<double>(k), Var<double>(onehot), 2,
                           Var<double>(lambda), {0.5}, false, &m1);
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < d; ++i) {
        bool kept = m1[0][h][static_cast<size_t>(i) * d + j] != 0;
        double val = yj.val().chan(0, h * d + i)[0];
        if (kept) {
          CHECK(val > 0.0);
        } else {
          CHECK(val == 0.0);  // exact zero, not merely small
        }
      }
  }
}

TEST_CASE("ssa_core reproduces the hand-evaluated masked softmax weight") {
  // Engineer unit-norm K rows so attention row 0 is [0.9, 0.1, 0.5, 0.3].
  // With k=2 the kept set is {0.9, 0.5} and the weight on 0.9 is
  // e^0.9 / (e^0.9 + e^0.5).
  const double targets[4] = {0.9, 0.1, 0.5, 0.3};
  nn::Tensor<double> q({1, 4, 1, 2}), k({1, 4, 1, 2}), v({1, 4, 1, 2});
  q.chan(0, 0)[0] = 1.0;  // q row 0 = (1,0); rows 1..3 stay ~0 and are ignored
  for (int j = 0; j < 4; ++j) {
    k.chan(0, j)[0] = targets[j];
    k.chan(0, j)[1] = std::sqrt(1.0 - targets[j] * targets[j]);
  }
  v.chan(0, 0)[0] = 1.0;  // one-hot on channel 0 isolates P[0][0]
  v.chan(0, 0)[1] = 1.0;
  auto lambda = nn::Tensor<double>({1}, 1.0);
  auto y = nn::ssa_core(Var<double>(q), Var<double>(k), Var<double>(v), 1,
                        Var<double>(lambda), {0.5});
  double expect = std::exp(0.9) / (std::exp(0.9) + std::exp(0.5));
  CHECK(y.val().chan(0, 0)[0] == doctest::Approx(expect).epsilon(1e-6));
  CHECK(expect == doctest::Approx(0.5987).epsilon(1e-3));
}

TEST_CASE("ssa_core gradient vs finite differences") {
  auto q = Var<double>(random_tensor<double>({1, 8, 3, 3}, 501), true);
  auto k = Var<double>(random_tensor<double>({1, 8, 3, 3}, 502), true);
  auto v = Var<double>(random_tensor<double>({1, 8, 3, 3}, 503), true);
  auto lt = nn::Tensor<double>({2});
  lt.v = {0.9, 1.2};
  auto lambda = Var<double>(lt, true);
  CHECK(fd_max_rel_error(
            [&] {
              return testsup::fd_loss(nn::ssa_core(q, k, v, 2, lambda, {0.5, 0.75}), 1091);
            },
            {q, k, v, lambda}) < 1e-4);
}

TEST_CASE("ssa_core literal-zero mode gradient vs finite differences") {
  auto q = Var<double>(random_tensor<double>({1, 8, 3, 3}, 511), true);
  auto k = Var<double>(random_tensor<double>({1, 8, 3, 3}, 512), true);
  auto v = Var<double>(random_tensor<double>({1, 8, 3, 3}, 513), true);
  auto lt = nn::Tensor<double>({2});
  lt.v = {1.1, 0.8};
  auto lambda = Var<double>(lt, true);
  CHECK(fd_max_rel_error(
            [&] {
              return testsup::fd_loss(
                  nn::ssa_core(q, k, v, 2, lambda, {0.5, 0.75}, true), 1092);
            },
            {q, k, v, lambda}) < 1e-4);
}

TEST_CASE("ssa_core literal-zero debug path differs from -inf masking") {
  auto q = random_tensor<double>({1, 8, 3, 3}, 601);
  auto k = random_tensor<double>({1, 8, 3, 3}, 602);
  auto v = random_tensor<double>({1, 8, 3, 3}, 603);
  auto lambda = nn::Tensor<double>({2}, 1.0);
  auto y_inf = nn::ssa_core(Var<double>(q), Var<double>(k), Var<double>(v), 2,
                            Var<double>(lambda), {0.5});
  auto y_lit = nn::ssa_core(Var<double>(q), Var<double>(k), Var<double>(v), 2,
                            Var<double>(lambda), {0.5}, true);
  double diff = 0;
  for (int64_t i = 0; i < y_inf.val().numel(); ++i)
    diff = std::max(diff, std::abs(y_inf.val().v[i] - y_lit.val().v[i]));
  CHECK(diff > 1e-6);
}

TEST_CASE("kernels are bit-deterministic across repeated calls") {
  auto x = random_tensor<float>({2, 8, 8, 8}, 701);
  auto w = random_tensor<float>({8, 8, 3, 3}, 702);
  auto b = random_tensor<float>({8}, 703);
  auto y1 = nn::conv2d(Var<float>(x), Var<float>(w), Var<float>(b), 1, 1, 1);
  auto y2 = nn::conv2d(Var<float>(x), Var<float>(w), Var<float>(b), 1, 1, 1);
  CHECK(y1.val().v == y2.val().v);
}

TEST_CASE("reflect pad and crop") {
  nn::Tensor<float> x({1, 1, 3, 3});
  std::iota(x.v.begin(), x.v.end(), 0.f);
  auto p = nn::reflect_pad2(x, 1, 1, 1, 1);
  REQUIRE(p.shape == std::vector<int>{1, 1, 5, 5});
  // Row -1 reflects to row 1: [3,4,5] -> padded row 0 is [4,3,4,5,4].
  CHECK(p.v[0] == 4.f);
  CHECK(p.v[1] == 3.f);
  auto c = nn::crop2(p, 1, 1, 3, 3);
  CHECK(c.v == x.v);
}

TEST_SUITE_END();
