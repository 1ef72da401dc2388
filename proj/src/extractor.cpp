#include "sshnet/extractor.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "sshnet/rng.hpp"

using nlohmann::json;

namespace sshnet {

namespace {
constexpr char kMagic[8] = {'S', 'S', 'H', 'N', 'F', 'X', '0', '1'};

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void FeatureExtractor::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write extractor: " + path);
  f.write(kMagic, 8);

  json meta;
  meta["taps"] = taps_;
  meta["mean"] = mean_;
  meta["std"] = std_;
  meta["layers"] = json::array();
  for (const auto& l : layers_) {
    json jl;
    jl["kind"] = l.kind == Layer::Kind::conv3x3 ? "conv" : l.kind == Layer::Kind::relu ? "relu"
                                                                                       : "pool";
    jl["cin"] = l.cin;
    jl["cout"] = l.cout;
    meta["layers"].push_back(jl);
  }
  meta["lpips_weights"] = lpips_weights_;
  std::string ms = meta.dump();
  write_u64(f, ms.size());
  f.write(ms.data(), static_cast<std::streamsize>(ms.size()));

  for (const auto& l : layers_) {
    if (l.kind != Layer::Kind::conv3x3) continue;
    write_u64(f, l.w.size());
    f.write(reinterpret_cast<const char*>(l.w.data()),
            static_cast<std::streamsize>(l.w.size() * sizeof(float)));
    write_u64(f, l.b.size());
    f.write(reinterpret_cast<const char*>(l.b.data()),
            static_cast<std::streamsize>(l.b.size() * sizeof(float)));
  }
}

FeatureExtractor FeatureExtractor::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open extractor: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not an extractor weight file: " + path);

  uint64_t mlen = read_u64(f);
  std::string ms(mlen, '\0');
  f.read(ms.data(), static_cast<std::streamsize>(mlen));
  json meta = json::parse(ms);

  FeatureExtractor fx;
  fx.taps_ = meta.at("taps").get<std::vector<int>>();
  auto mean = meta.at("mean").get<std::vector<double>>();
  auto stdv = meta.at("std").get<std::vector<double>>();
  std::copy(mean.begin(), mean.end(), fx.mean_.begin());
  std::copy(stdv.begin(), stdv.end(), fx.std_.begin());
  fx.lpips_weights_ = meta.value("lpips_weights", std::vector<std::vector<float>>{});

  for (const auto& jl : meta.at("layers")) {
    Layer l;
    std::string kind = jl.at("kind").get<std::string>();
    l.kind = kind == "conv" ? Layer::Kind::conv3x3
                            : kind == "relu" ? Layer::Kind::relu : Layer::Kind::maxpool;
    l.cin = jl.at("cin").get<int>();
    l.cout = jl.at("cout").get<int>();
    fx.layers_.push_back(std::move(l));
  }
  for (auto& l : fx.layers_) {
    if (l.kind != Layer::Kind::conv3x3) continue;
    uint64_t wn = read_u64(f);
    l.w.resize(wn);
    f.read(reinterpret_cast<char*>(l.w.data()),
           static_cast<std::streamsize>(wn * sizeof(float)));
    uint64_t bn = read_u64(f);
    l.b.resize(bn);
    f.read(reinterpret_cast<char*>(l.b.data()),
           static_cast<std::streamsize>(bn * sizeof(float)));
    if (l.w.size() != static_cast<size_t>(l.cout) * l.cin * 9 ||
        l.b.size() != static_cast<size_t>(l.cout))
      throw std::runtime_error("extractor weight size mismatch in " + path);
  }
  if (!f) throw std::runtime_error("truncated extractor file: " + path);
  return fx;
}

FeatureExtractor FeatureExtractor::make_random(const std::vector<int>& stage_widths,
                                               uint64_t seed) {
  FeatureExtractor fx;
  int cin = 3;
  int idx = 0;
  for (size_t s = 0; s < stage_widths.size(); ++s) {
    int cout = stage_widths[s];
    Layer conv;
    conv.kind = Layer::Kind::conv3x3;
    conv.cin = cin;
    conv.cout = cout;
    conv.w.resize(static_cast<size_t>(cout) * cin * 9);
    conv.b.resize(cout);
    Rng rng(seed, "fx/conv" + std::to_string(s));
    double bound = 1.0 / std::sqrt(static_cast<double>(cin) * 9);
    for (auto& v : conv.w) v = static_cast<float>(rng.uniform(-bound, bound));
    for (auto& v : conv.b) v = static_cast<float>(rng.uniform(-bound, bound));
    fx.layers_.push_back(std::move(conv));
    ++idx;
    fx.layers_.push_back({Layer::Kind::relu, cout, cout, {}, {}});
    ++idx;
    if (s + 1 < stage_widths.size()) {
      fx.layers_.push_back({Layer::Kind::maxpool, cout, cout, {}, {}});
      ++idx;
    }
    cin = cout;
  }
  fx.taps_ = {idx - 1};  // last relu
  return fx;
}

template <typename T>
std::vector<nn::Var<T>> FeatureExtractor::features(const nn::Var<T>& x) const {
  if (x.val().ndim() != 4 || x.val().c() != 3)
    throw std::invalid_argument("FeatureExtractor: expected [N,3,H,W] input");
  std::vector<double> scale(3), bias(3);
  for (int c = 0; c < 3; ++c) {
    scale[c] = 1.0 / std_[c];
    bias[c] = -mean_[c] / std_[c];
  }
  nn::Var<T> t = nn::channel_affine(nn::clamp01(x), scale, bias);

  std::vector<nn::Var<T>> out;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    switch (l.kind) {
      case Layer::Kind::conv3x3: {
        nn::Tensor<T> w({l.cout, l.cin, 3, 3});
        for (size_t j = 0; j < l.w.size(); ++j) w.v[j] = static_cast<T>(l.w[j]);
        nn::Tensor<T> b({l.cout});
        for (size_t j = 0; j < l.b.size(); ++j) b.v[j] = static_cast<T>(l.b[j]);
        t = nn::conv2d(t, nn::Var<T>(std::move(w)), nn::Var<T>(std::move(b)), 1, 1, 1);
        break;
      }
      case Layer::Kind::relu: t = nn::relu(t); break;
      case Layer::Kind::maxpool: t = nn::maxpool2(t); break;
    }
    for (int tap : taps_)
      if (tap == static_cast<int>(i)) out.push_back(t);
  }
  if (out.size() != taps_.size())
    throw std::runtime_error("FeatureExtractor: tap index out of range");
  return out;
}

double lpips(const Image& a, const Image& b, const FeatureExtractor& fx) {
  if (!a.same_shape(b)) throw std::invalid_argument("lpips: shape mismatch");
  nn::NoGradGuard ng;
  nn::Tensor<double> ta({1, 3, a.height, a.width}), tb({1, 3, a.height, a.width});
  const int64_t plane = static_cast<int64_t>(a.height) * a.width;
  for (int ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < plane; ++i) {
      ta.chan(0, ch)[i] = a.px[i * 3 + ch];
      tb.chan(0, ch)[i] = b.px[i * 3 + ch];
    }
  auto fa = fx.features<double>(nn::Var<double>(std::move(ta)));
  auto fb = fx.features<double>(nn::Var<double>(std::move(tb)));

  double total = 0.0;
  for (size_t t = 0; t < fa.size(); ++t) {
    const auto& va = fa[t].val();
    const auto& vb = fb[t].val();
    const int c = va.c();
    const int64_t pl = va.plane();
    const std::vector<float>* wts =
        fx.has_lpips_weights() && t < fx.lpips_weights().size() ? &fx.lpips_weights()[t]
                                                                : nullptr;
    double tap_acc = 0.0;
    for (int64_t i = 0; i < pl; ++i) {
      double na = 1e-10, nb = 1e-10;
      for (int ic = 0; ic < c; ++ic) {
        na += va.chan(0, ic)[i] * va.chan(0, ic)[i];
        nb += vb.chan(0, ic)[i] * vb.chan(0, ic)[i];
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      for (int ic = 0; ic < c; ++ic) {
        double d = va.chan(0, ic)[i] / na - vb.chan(0, ic)[i] / nb;
        double w = wts ? (*wts)[ic] : 1.0 / c;
        tap_acc += w * d * d;
      }
    }
    total += tap_acc / static_cast<double>(pl);
  }
  return total;
}

std::optional<double> lpips_if_available(const Image& a, const Image& b,
                                         const std::string& extractor_path) {
  if (extractor_path.empty() || !std::filesystem::exists(extractor_path)) return std::nullopt;
  try {
    FeatureExtractor fx = FeatureExtractor::load(extractor_path);
    return lpips(a, b, fx);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

template std::vector<nn::Var<float>> FeatureExtractor::features<float>(
    const nn::Var<float>&) const;
template std::vector<nn::Var<double>> FeatureExtractor::features<double>(
    const nn::Var<double>&) const;

}  // namespace sshnet
