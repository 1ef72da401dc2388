#include "sshnet/nn/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace sshnet::nn {

// ---- registry ----------------------------------------------------------------

template <typename T>
Var<T> ParamRegistry<T>::uniform_fan_in(const std::string& name, std::vector<int> shape,
                                        int fan_in) {
  Tensor<T> t(shape);
  Rng rng(seed_, "init/" + name);
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.v) v = static_cast<T>(rng.uniform(-bound, bound));
  Var<T> p(std::move(t), true, name);
  params_.push_back(p);
  return p;
}

template <typename T>
Var<T> ParamRegistry<T>::constant(const std::string& name, std::vector<int> shape, T value) {
  Tensor<T> t(shape);
  std::fill(t.v.begin(), t.v.end(), value);
  Var<T> p(std::move(t), true, name);
  params_.push_back(p);
  return p;
}

template <typename T>
int64_t ParamRegistry<T>::param_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.val().numel();
  return n;
}

template <typename T>
void ParamRegistry<T>::zero_grad() {
  for (auto& p : params_) const_cast<Var<T>&>(p).zero_grad();
}

template <typename T>
Var<T>* ParamRegistry<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name() == name) return &p;
  return nullptr;
}

// ---- conv ----------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(ParamRegistry<T>& reg, const std::string& name, int cin_, int cout_, int k_,
                  int stride_, int pad_, int groups_)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_), groups(groups_) {
  int fan_in = (cin / groups) * k * k;
  w = reg.uniform_fan_in(name + ".w", {cout, cin / groups, k, k}, fan_in);
  b = reg.uniform_fan_in(name + ".b", {cout}, fan_in);
}

template <typename T>
void Conv2d<T>::out_size(int h, int w_, int& oh, int& ow) const {
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (w_ + 2 * pad - k) / stride + 1;
}

template <typename T>
int64_t Conv2d<T>::macs(int h, int w_) const {
  int oh, ow;
  out_size(h, w_, oh, ow);
  return static_cast<int64_t>(cout) * (cin / groups) * k * k * oh * ow;
}

// ---- layer norm ------------------------------------------------------------------

template <typename T>
LayerNorm2d<T>::LayerNorm2d(ParamRegistry<T>& reg, const std::string& name, int channels) {
  gamma = reg.constant(name + ".g", {channels}, T(1));
  beta = reg.constant(name + ".b", {channels}, T(0));
}

// ---- SCA ---------------------------------------------------------------------------

template <typename T>
Sca<T>::Sca(ParamRegistry<T>& reg, const std::string& name, int channels)
    : proj(reg, name + ".proj", channels, channels, 1) {}

template <typename T>
Var<T> Sca<T>::operator()(const Var<T>& x) const {
  return mul_bcast_c(x, proj(global_avg_pool(x)));
}

// ---- NAFBlock --------------------------------------------------------------------

template <typename T>
NafBlock<T>::NafBlock(ParamRegistry<T>& reg, const std::string& name, int c)
    : ln1(reg, name + ".ln1", c),
      ln2(reg, name + ".ln2", c),
      expand1(reg, name + ".conv1", c, 2 * c, 1),
      dw(reg, name + ".dw", 2 * c, 2 * c, 3, 1, 1, 2 * c),
      sca_out(reg, name + ".conv2", c, c, 1),
      ffn_in(reg, name + ".ffn1", c, 2 * c, 1),
      ffn_out(reg, name + ".ffn2", c, c, 1),
      sca(reg, name + ".sca", c) {}

template <typename T>
Var<T> NafBlock<T>::operator()(const Var<T>& x) const {
  auto t = simple_gate(dw(expand1(ln1(x))));
  auto y1 = add(x, sca_out(sca(t)));
  auto u = simple_gate(ffn_in(ln2(y1)));
  return add(y1, ffn_out(u));
}

template <typename T>
int64_t NafBlock<T>::macs(int h, int w) const {
  return expand1.macs(h, w) + dw.macs(h, w) + sca.macs(h, w) + sca_out.macs(h, w) +
         ffn_in.macs(h, w) + ffn_out.macs(h, w);
}

// ---- gated feed-forward -------------------------------------------------------------

template <typename T>
Gdfn<T>::Gdfn(ParamRegistry<T>& reg, const std::string& name, int c, double expansion)
    : hidden(static_cast<int>(std::floor(expansion * c))) {
  expand = Conv2d<T>(reg, name + ".expand", c, 2 * hidden, 1);
  dw = Conv2d<T>(reg, name + ".dw", 2 * hidden, 2 * hidden, 3, 1, 1, 2 * hidden);
  proj = Conv2d<T>(reg, name + ".proj", hidden, c, 1);
}

template <typename T>
Var<T> Gdfn<T>::operator()(const Var<T>& x) const {
  auto t = dw(expand(x));
  auto gate = gelu(slice_c(t, 0, hidden));
  auto val = slice_c(t, hidden, hidden);
  return proj(mul(gate, val));
}

template <typename T>
int64_t Gdfn<T>::macs(int h, int w) const {
  return expand.macs(h, w) + dw.macs(h, w) + proj.macs(h, w);
}

// ---- sparse self-attention -----------------------------------------------------------

template <typename T>
Ssa<T>::Ssa(ParamRegistry<T>& reg, const std::string& name, int c, int heads_,
            std::vector<double> rates_)
    : qkv(reg, name + ".qkv", c, 3 * c, 1),
      qkv_dw(reg, name + ".qkv_dw", 3 * c, 3 * c, 3, 1, 1, 3 * c),
      proj(reg, name + ".proj", c, c, 1),
      heads(heads_),
      rates(std::move(rates_)) {
  if (c % heads != 0) throw std::invalid_argument("Ssa: channels not divisible by heads");
  lambda = reg.constant(name + ".lambda", {heads}, T(1));
}

template <typename T>
Var<T> Ssa<T>::forward_with_masks(
    const Var<T>& x, std::vector<std::vector<std::vector<uint8_t>>>* masks) const {
  const int c = x.val().c();
  auto t = qkv_dw(qkv(x));
  auto q = slice_c(t, 0, c);
  auto k = slice_c(t, c, c);
  auto v = slice_c(t, 2 * c, c);
  // Column-wise selection is row-wise selection on the transposed map, i.e.
  // attention built from K Q^T instead of Q K^T.
  if (select_input_columns) std::swap(q, k);
  auto y = ssa_core(q, k, v, heads, lambda, rates, literal_zero_prune, masks);
  return proj(y);
}

template <typename T>
Var<T> Ssa<T>::operator()(const Var<T>& x) const {
  return forward_with_masks(x, nullptr);
}

template <typename T>
int64_t Ssa<T>::macs(int h, int w) const {
  int64_t m = qkv.macs(h, w) + qkv_dw.macs(h, w) + proj.macs(h, w);
  // Attention matmuls: QK^T plus the (branch-averaged) PV product.
  int c = proj.cin;
  int64_t d = c / heads;
  m += 2 * static_cast<int64_t>(c) * d * h * w;
  return m;
}

// ---- sparse transformer block ----------------------------------------------------------

template <typename T>
Stb<T>::Stb(ParamRegistry<T>& reg, const std::string& name, int c, int heads,
            std::vector<double> rates, double ffn_expansion)
    : ln1(reg, name + ".ln1", c),
      ln2(reg, name + ".ln2", c),
      ssa(reg, name + ".ssa", c, heads, std::move(rates)),
      ffn(reg, name + ".ffn", c, ffn_expansion) {}

template <typename T>
Var<T> Stb<T>::operator()(const Var<T>& x) const {
  auto y1 = add(x, ssa(ln1(x)));
  return add(y1, ffn(ln2(y1)));
}

template <typename T>
int64_t Stb<T>::macs(int h, int w) const {
  return ssa.macs(h, w) + ffn.macs(h, w);
}

// ---- resampling ---------------------------------------------------------------------------

template <typename T>
Downsample<T>::Downsample(ParamRegistry<T>& reg, const std::string& name, int cin, int cout)
    : conv(reg, name + ".conv", cin, cout, 3, 2, 1) {}

template <typename T>
Var<T> Downsample<T>::operator()(const Var<T>& x) const {
  if (x.val().h() % 2 != 0 || x.val().w() % 2 != 0)
    throw std::invalid_argument("Downsample: spatial dims must be even, got " +
                                x.val().shape_str());
  return conv(x);
}

template <typename T>
Upsample<T>::Upsample(ParamRegistry<T>& reg, const std::string& name, int cin, int cout)
    : conv(reg, name + ".conv", cin, 4 * cout, 1) {}

// ---- instantiations --------------------------------------------------------------------

#define SSHNET_INSTANTIATE_BLOCKS(T) \
  template class ParamRegistry<T>;   \
  template struct Conv2d<T>;         \
  template struct LayerNorm2d<T>;    \
  template struct Sca<T>;            \
  template struct NafBlock<T>;       \
  template struct Gdfn<T>;           \
  template struct Ssa<T>;            \
  template struct Stb<T>;            \
  template struct Downsample<T>;     \
  template struct Upsample<T>;

SSHNET_INSTANTIATE_BLOCKS(float)
SSHNET_INSTANTIATE_BLOCKS(double)
#undef SSHNET_INSTANTIATE_BLOCKS

}  // namespace sshnet::nn
