#include "sshnet/model.hpp"

#include <cmath>
#include <stdexcept>

namespace sshnet {

using nn::Var;

template <typename T>
void SshNet<T>::build_encoder(Encoder& enc, const std::string& prefix) {
  const int c = cfg_.base_width;
  for (int i = 0; i < cfg_.level_depths[0]; ++i)
    enc.s1.emplace_back(reg_, prefix + ".s1.b" + std::to_string(i), c);
  enc.down1 = nn::Downsample<T>(reg_, prefix + ".down1", c, c);
  for (int i = 0; i < cfg_.level_depths[1]; ++i)
    enc.s2.emplace_back(reg_, prefix + ".s2.b" + std::to_string(i), c);
  enc.down2 = nn::Downsample<T>(reg_, prefix + ".down2", c, c);
}

template <typename T>
SshNet<T>::SshNet(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg), reg_(init_seed) {
  cfg_.validate_or_throw();
  const int c = cfg_.base_width;
  const auto rates = cfg_.effective_rates();
  const auto widths = cfg_.st_widths();
  const auto& L = cfg_.level_depths;

  stem_ = nn::Conv2d<T>(reg_, "stem", 3, c, 3, 1, 1);
  build_encoder(se_, "se");
  if (cfg_.variant == Variant::dual_encoders) {
    se_nrd_ = std::make_unique<Encoder>();
    build_encoder(*se_nrd_, "se_b");
  }

  if (has_nrd()) {
    for (int i = 0; i < cfg_.nrd_bottleneck_depth; ++i)
      nrd_mid_.emplace_back(reg_, "nrd.mid.b" + std::to_string(i), c);
    nrd_up1_ = nn::Upsample<T>(reg_, "nrd.up1", c, c);
    nrd_fuse1_ = nn::Conv2d<T>(reg_, "nrd.fuse1", 2 * c, c, 1);
    for (int i = 0; i < L[1]; ++i) nrd_d2_.emplace_back(reg_, "nrd.d2.b" + std::to_string(i), c);
    nrd_up2_ = nn::Upsample<T>(reg_, "nrd.up2", c, c);
    nrd_fuse2_ = nn::Conv2d<T>(reg_, "nrd.fuse2", 2 * c, c, 1);
    for (int i = 0; i < L[0]; ++i) nrd_d1_.emplace_back(reg_, "nrd.d1.b" + std::to_string(i), c);
    head_n_ = nn::Conv2d<T>(reg_, "head.n", c, 3, 3, 1, 1);
  }

  if (has_wnrd()) {
    for (int i = 0; i < L[2]; ++i)
      st_enc1_.emplace_back(reg_, "wnrd.st.enc1.b" + std::to_string(i), widths[0],
                            cfg_.st_heads[0], rates, cfg_.ffn_expansion);
    st_down1_ = nn::Downsample<T>(reg_, "wnrd.st.down1", widths[0], widths[1]);
    for (int i = 0; i < L[3]; ++i)
      st_enc2_.emplace_back(reg_, "wnrd.st.enc2.b" + std::to_string(i), widths[1],
                            cfg_.st_heads[1], rates, cfg_.ffn_expansion);
    st_down2_ = nn::Downsample<T>(reg_, "wnrd.st.down2", widths[1], widths[2]);
    for (int i = 0; i < L[4]; ++i)
      st_mid_.emplace_back(reg_, "wnrd.st.mid.b" + std::to_string(i), widths[2],
                           cfg_.st_heads[2], rates, cfg_.ffn_expansion);
    st_up1_ = nn::Upsample<T>(reg_, "wnrd.st.up1", widths[2], widths[3]);
    st_fuse1_ = nn::Conv2d<T>(reg_, "wnrd.st.fuse1", 2 * widths[3], widths[3], 1);
    for (int i = 0; i < L[3]; ++i)
      st_dec2_.emplace_back(reg_, "wnrd.st.dec2.b" + std::to_string(i), widths[3],
                            cfg_.st_heads[3], rates, cfg_.ffn_expansion);
    st_up2_ = nn::Upsample<T>(reg_, "wnrd.st.up2", widths[3], widths[4]);
    st_fuse2_ = nn::Conv2d<T>(reg_, "wnrd.st.fuse2", 2 * widths[4], widths[4], 1);
    for (int i = 0; i < L[2]; ++i)
      st_dec1_.emplace_back(reg_, "wnrd.st.dec1.b" + std::to_string(i), widths[4],
                            cfg_.st_heads[4], rates, cfg_.ffn_expansion);

    wnrd_up1_ = nn::Upsample<T>(reg_, "wnrd.dec.up1", c, c);
    wnrd_fuse1_ = nn::Conv2d<T>(reg_, "wnrd.dec.fuse1", 2 * c, c, 1);
    for (int i = 0; i < L[1]; ++i)
      wnrd_d2_.emplace_back(reg_, "wnrd.dec.d2.b" + std::to_string(i), c);
    wnrd_up2_ = nn::Upsample<T>(reg_, "wnrd.dec.up2", c, c);
    wnrd_fuse2_ = nn::Conv2d<T>(reg_, "wnrd.dec.fuse2", 2 * c, c, 1);
    for (int i = 0; i < L[0]; ++i)
      wnrd_d1_.emplace_back(reg_, "wnrd.dec.d1.b" + std::to_string(i), c);
    head_wn_ = nn::Conv2d<T>(reg_, "head.wn", c, 3, 3, 1, 1);
  }

  if (has_ffu()) {
    gate1_ = nn::Conv2d<T>(reg_, "ffu.gate1", c, c, 1);
    gate2_ = nn::Conv2d<T>(reg_, "ffu.gate2", c, c, 1);
    ffu_block_ = std::make_unique<nn::NafBlock<T>>(reg_, "ffu.block", c);
    head_hat_ = nn::Conv2d<T>(reg_, "head.hat", c, 3, 3, 1, 1);
  }

  // Attention debug/convention flags apply uniformly across every stage.
  if (cfg_.literal_zero_prune || cfg_.topk_select_input_columns) {
    auto flag = [&](std::vector<nn::Stb<T>>& blocks) {
      for (auto& b : blocks) {
        b.ssa.literal_zero_prune = cfg_.literal_zero_prune;
        b.ssa.select_input_columns = cfg_.topk_select_input_columns;
      }
    };
    flag(st_enc1_);
    flag(st_enc2_);
    flag(st_mid_);
    flag(st_dec2_);
    flag(st_dec1_);
  }
}

template <typename T>
bool SshNet<T>::has_nrd() const {
  return cfg_.variant != Variant::se_wnrd_only;
}

template <typename T>
bool SshNet<T>::has_wnrd() const {
  return cfg_.variant != Variant::se_nrd_only;
}

template <typename T>
bool SshNet<T>::has_ffu() const {
  return cfg_.variant == Variant::full || cfg_.variant == Variant::dense_mdta ||
         cfg_.variant == Variant::dual_encoders;
}

template <typename T>
Var<T> SshNet<T>::run_encoder(const Encoder& enc, const Var<T>& f0, Var<T>& skip1,
                              Var<T>& skip2) const {
  Var<T> t = f0;
  for (const auto& b : enc.s1) t = b(t);
  skip1 = t;
  t = enc.down1(t);
  for (const auto& b : enc.s2) t = b(t);
  skip2 = t;
  return enc.down2(t);
}

template <typename T>
SshNetOutputs<T> SshNet<T>::forward(const Var<T>& x) const {
  const auto& xv = x.val();
  if (xv.ndim() != 4 || xv.c() != 3)
    throw std::invalid_argument("forward: expected [N,3,H,W] input, got " + xv.shape_str());
  if (xv.h() % 16 != 0 || xv.w() % 16 != 0)
    throw std::invalid_argument(
        "forward: H and W must be divisible by 16 (reflect-pad the input, e.g. via "
        "infer_tiled); got " +
        xv.shape_str());

  SshNetOutputs<T> outs;
  Var<T> f0 = stem_(x);
  Var<T> skip1, skip2;
  Var<T> f_se = run_encoder(se_, f0, skip1, skip2);

  Var<T> f_n;
  if (has_nrd()) {
    Var<T> nskip1 = skip1, nskip2 = skip2, nf_se = f_se;
    if (se_nrd_) nf_se = run_encoder(*se_nrd_, f0, nskip1, nskip2);
    Var<T> t = nf_se;
    for (const auto& b : nrd_mid_) t = b(t);
    t = nrd_fuse1_(concat_c(nrd_up1_(t), nskip2));
    for (const auto& b : nrd_d2_) t = b(t);
    t = nrd_fuse2_(concat_c(nrd_up2_(t), nskip1));
    for (const auto& b : nrd_d1_) t = b(t);
    f_n = t;
    outs.y_n = head_n_(f_n);
  }

  Var<T> f_wn;
  if (has_wnrd()) {
    Var<T> t = f_se;
    for (const auto& b : st_enc1_) t = b(t);
    Var<T> e1 = t;
    t = st_down1_(t);
    for (const auto& b : st_enc2_) t = b(t);
    Var<T> e2 = t;
    t = st_down2_(t);
    for (const auto& b : st_mid_) t = b(t);
    t = st_fuse1_(concat_c(st_up1_(t), e2));
    for (const auto& b : st_dec2_) t = b(t);
    t = st_fuse2_(concat_c(st_up2_(t), e1));
    for (const auto& b : st_dec1_) t = b(t);

    t = wnrd_fuse1_(concat_c(wnrd_up1_(t), skip2));
    for (const auto& b : wnrd_d2_) t = b(t);
    t = wnrd_fuse2_(concat_c(wnrd_up2_(t), skip1));
    for (const auto& b : wnrd_d1_) t = b(t);
    f_wn = t;
    outs.y_wn = head_wn_(f_wn);
  }

  if (has_ffu()) {
    outs.gate = nn::sigmoid(gate2_(nn::gelu(gate1_(f_wn))));
    Var<T> fused = (*ffu_block_)(nn::add(f_wn, nn::mul(outs.gate, f_n)));
    outs.y_hat = nn::add(head_hat_(fused), x);
  }
  return outs;
}

template <typename T>
Var<T> SshNet<T>::primary_output(const SshNetOutputs<T>& outs) const {
  switch (cfg_.variant) {
    case Variant::se_nrd_only: return outs.y_n;
    case Variant::se_wnrd_only:
    case Variant::dual_no_ffu: return outs.y_wn;
    default: return outs.y_hat;
  }
}

template <typename T>
ComplexityReport SshNet<T>::complexity(int h, int w) const {
  if (h % 16 != 0 || w % 16 != 0)
    throw std::invalid_argument("complexity: resolution must be divisible by 16");
  ComplexityReport rep;
  rep.height = h;
  rep.width = w;
  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  const int h8 = h / 8, w8 = w / 8, h16 = h / 16, w16 = w / 16;

  auto part = [&](const std::string& name, int64_t macs) {
    rep.parts.push_back({name, 0, macs});
  };

  part("stem", stem_.macs(h, w));

  auto encoder_macs = [&](const Encoder& enc) {
    int64_t m = 0;
    for (const auto& b : enc.s1) m += b.macs(h, w);
    m += enc.down1.macs(h, w);
    for (const auto& b : enc.s2) m += b.macs(h2, w2);
    m += enc.down2.macs(h2, w2);
    return m;
  };
  part("se", encoder_macs(se_));
  if (se_nrd_) part("se_b", encoder_macs(*se_nrd_));

  if (has_nrd()) {
    int64_t m = 0;
    for (const auto& b : nrd_mid_) m += b.macs(h4, w4);
    m += nrd_up1_.macs(h4, w4) + nrd_fuse1_.macs(h2, w2);
    for (const auto& b : nrd_d2_) m += b.macs(h2, w2);
    m += nrd_up2_.macs(h2, w2) + nrd_fuse2_.macs(h, w);
    for (const auto& b : nrd_d1_) m += b.macs(h, w);
    part("nrd", m);
  }

  if (has_wnrd()) {
    int64_t m = 0;
    for (const auto& b : st_enc1_) m += b.macs(h4, w4);
    m += st_down1_.macs(h4, w4);
    for (const auto& b : st_enc2_) m += b.macs(h8, w8);
    m += st_down2_.macs(h8, w8);
    for (const auto& b : st_mid_) m += b.macs(h16, w16);
    m += st_up1_.macs(h16, w16) + st_fuse1_.macs(h8, w8);
    for (const auto& b : st_dec2_) m += b.macs(h8, w8);
    m += st_up2_.macs(h8, w8) + st_fuse2_.macs(h4, w4);
    for (const auto& b : st_dec1_) m += b.macs(h4, w4);
    part("wnrd.st", m);

    int64_t md = wnrd_up1_.macs(h4, w4) + wnrd_fuse1_.macs(h2, w2);
    for (const auto& b : wnrd_d2_) md += b.macs(h2, w2);
    md += wnrd_up2_.macs(h2, w2) + wnrd_fuse2_.macs(h, w);
    for (const auto& b : wnrd_d1_) md += b.macs(h, w);
    part("wnrd.dec", md);
  }

  if (has_ffu()) {
    part("ffu", gate1_.macs(h, w) + gate2_.macs(h, w) + ffu_block_->macs(h, w));
  }

  int64_t heads_macs = 0;
  if (has_nrd()) heads_macs += head_n_.macs(h, w);
  if (has_wnrd()) heads_macs += head_wn_.macs(h, w);
  if (has_ffu()) heads_macs += head_hat_.macs(h, w);
  part("heads", heads_macs);

  // Attribute parameter counts to parts by name prefix.
  for (auto& p : rep.parts) {
    std::string prefix = p.name == "stem" ? "stem" : p.name + ".";
    if (p.name == "heads") prefix = "head.";
    for (const auto& param : reg_.all()) {
      const std::string& n = param.name();
      if (n.rfind(prefix, 0) == 0) p.params += param.val().numel();
    }
  }

  for (const auto& p : rep.parts) {
    rep.macs += p.macs;
    rep.params += p.params;
  }
  rep.flops = 2 * rep.macs;
  return rep;
}

// ---- image bridges -----------------------------------------------------------

template <typename T>
nn::Tensor<T> image_to_tensor(const Image& img) {
  nn::Tensor<T> t({1, 3, img.height, img.width});
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int ch = 0; ch < 3; ++ch) {
    T* dst = t.chan(0, ch);
    for (int64_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(img.px[i * 3 + ch]);
  }
  return t;
}

template <typename T>
Image tensor_to_image(const nn::Tensor<T>& t, int sample) {
  Image img(t.h(), t.w());
  const int64_t plane = t.plane();
  for (int ch = 0; ch < 3; ++ch) {
    const T* src = t.chan(sample, ch);
    for (int64_t i = 0; i < plane; ++i) img.px[i * 3 + ch] = static_cast<float>(src[i]);
  }
  return img;
}

template <typename T>
Image infer_tiled(const SshNet<T>& model, const Image& img) {
  nn::NoGradGuard ng;
  nn::Tensor<T> x = image_to_tensor<T>(img);
  int ph = (16 - img.height % 16) % 16;
  int pw = (16 - img.width % 16) % 16;
  if (ph || pw) x = nn::reflect_pad2(x, 0, ph, 0, pw);
  auto outs = model.forward(Var<T>(std::move(x)));
  nn::Tensor<T> y = model.primary_output(outs).val();
  if (ph || pw) y = nn::crop2(y, 0, 0, img.height, img.width);
  Image out = tensor_to_image<T>(y, 0);
  out.id = img.id;
  for (float& v : out.px) v = std::min(std::max(v, 0.f), 1.f);
  return out;
}

template <typename T>
GateMapResult extract_gate_maps(const SshNet<T>& model, const Image& img) {
  if (!model.has_ffu())
    throw std::invalid_argument("extract_gate_maps: variant has no feature fusion unit");
  nn::NoGradGuard ng;
  nn::Tensor<T> x = image_to_tensor<T>(img);
  int ph = (16 - img.height % 16) % 16;
  int pw = (16 - img.width % 16) % 16;
  if (ph || pw) x = nn::reflect_pad2(x, 0, ph, 0, pw);
  auto outs = model.forward(Var<T>(std::move(x)));
  nn::Tensor<T> g = outs.gate.val();
  if (ph || pw) g = nn::crop2(g, 0, 0, img.height, img.width);

  GateMapResult res;
  res.height = img.height;
  res.width = img.width;
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  const int c = g.c();
  res.plane.assign(plane, 0.f);
  int64_t below = 0;
  for (int ic = 0; ic < c; ++ic) {
    const T* gc = g.chan(0, ic);
    for (int64_t i = 0; i < plane; ++i) {
      res.plane[i] += static_cast<float>(gc[i]);
      if (gc[i] < T(0.5)) ++below;
    }
  }
  for (auto& v : res.plane) v /= static_cast<float>(c);
  res.fraction_below_half = static_cast<double>(below) / (static_cast<double>(plane) * c);
  // The gate lives at input resolution already; a bilinear upsample here would
  // be the identity, so the plane is returned as computed.
  double mean = 0.0;
  for (float v : res.plane) mean += v;
  mean /= static_cast<double>(plane);
  double var = 0.0;
  for (float v : res.plane) var += (v - mean) * (v - mean);
  res.mean = mean;
  res.stddev = std::sqrt(var / static_cast<double>(plane));
  return res;
}

#define SSHNET_INSTANTIATE_MODEL(T)                             \
  template class SshNet<T>;                                     \
  template Image infer_tiled<T>(const SshNet<T>&, const Image&); \
  template GateMapResult extract_gate_maps<T>(const SshNet<T>&, const Image&); \
  template nn::Tensor<T> image_to_tensor<T>(const Image&);      \
  template Image tensor_to_image<T>(const nn::Tensor<T>&, int);

SSHNET_INSTANTIATE_MODEL(float)
SSHNET_INSTANTIATE_MODEL(double)
#undef SSHNET_INSTANTIATE_MODEL

}  // namespace sshnet
