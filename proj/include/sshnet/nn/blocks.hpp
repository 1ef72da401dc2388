#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sshnet/nn/ops.hpp"
#include "sshnet/rng.hpp"

namespace sshnet::nn {

// Named, ordered parameter store. Initialization streams are keyed per
// parameter name, so the values of any one tensor do not depend on creation
// order elsewhere in the model.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t init_seed) : seed_(init_seed) {}

  // Kaiming-uniform over fan_in, the initialization of the cited conv designs.
  Var<T> uniform_fan_in(const std::string& name, std::vector<int> shape, int fan_in);
  Var<T> constant(const std::string& name, std::vector<int> shape, T value);

  std::vector<Var<T>>& all() { return params_; }
  const std::vector<Var<T>>& all() const { return params_; }
  int64_t param_count() const;
  void zero_grad();
  Var<T>* find(const std::string& name);

 private:
  uint64_t seed_;
  std::vector<Var<T>> params_;
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int cin = 0, cout = 0, k = 1, stride = 1, pad = 0, groups = 1;

  Conv2d() = default;
  Conv2d(ParamRegistry<T>& reg, const std::string& name, int cin, int cout, int k,
         int stride = 1, int pad = 0, int groups = 1);
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad, groups); }
  int64_t macs(int h, int w) const;  // per sample at the given input size
  void out_size(int h, int w, int& oh, int& ow) const;
};

template <typename T>
struct LayerNorm2d {
  Var<T> gamma, beta;
  LayerNorm2d() = default;
  LayerNorm2d(ParamRegistry<T>& reg, const std::string& name, int channels);
  Var<T> operator()(const Var<T>& x) const { return layer_norm_chan(x, gamma, beta); }
};

// Simplified channel attention: global pool -> 1x1 conv -> channel rescale.
template <typename T>
struct Sca {
  Conv2d<T> proj;
  Sca() = default;
  Sca(ParamRegistry<T>& reg, const std::string& name, int channels);
  Var<T> operator()(const Var<T>& x) const;
  int64_t macs(int h, int w) const { return proj.macs(1, 1); }
};

// Nonlinear-activation-free block: two residual stages built from LN,
// pointwise/depthwise convs, SimpleGate and SCA. Internal expansion 2.
template <typename T>
struct NafBlock {
  LayerNorm2d<T> ln1, ln2;
  Conv2d<T> expand1, dw, sca_out, ffn_in, ffn_out;
  Sca<T> sca;

  NafBlock() = default;
  NafBlock(ParamRegistry<T>& reg, const std::string& name, int channels);
  Var<T> operator()(const Var<T>& x) const;
  int64_t macs(int h, int w) const;
};

// Gated depthwise feed-forward, hidden width floor(expansion * channels).
template <typename T>
struct Gdfn {
  Conv2d<T> expand, dw, proj;
  int hidden = 0;

  Gdfn() = default;
  Gdfn(ParamRegistry<T>& reg, const std::string& name, int channels, double expansion);
  Var<T> operator()(const Var<T>& x) const;
  int64_t macs(int h, int w) const;
};

// Sparse self-attention over the channel dimension (transposed attention)
// with the outputs of all top-k rate branches averaged.
template <typename T>
struct Ssa {
  Conv2d<T> qkv, qkv_dw, proj;
  Var<T> lambda;  // per-head scale, init 1
  int heads = 1;
  std::vector<double> rates;
  bool literal_zero_prune = false;
  // Run selection/softmax over the transposed attention map (column reading
  // of the top-k convention).
  bool select_input_columns = false;

  Ssa() = default;
  Ssa(ParamRegistry<T>& reg, const std::string& name, int channels, int heads,
      std::vector<double> rates);
  Var<T> operator()(const Var<T>& x) const;
  // Exposes the per-branch selection masks, for oracle tests and debugging.
  Var<T> forward_with_masks(const Var<T>& x,
                            std::vector<std::vector<std::vector<uint8_t>>>* masks) const;
  int64_t macs(int h, int w) const;
};

// Sparse Transformer block: x + SSA(LN(x)), then + FFN(LN(.)).
template <typename T>
struct Stb {
  LayerNorm2d<T> ln1, ln2;
  Ssa<T> ssa;
  Gdfn<T> ffn;

  Stb() = default;
  Stb(ParamRegistry<T>& reg, const std::string& name, int channels, int heads,
      std::vector<double> rates, double ffn_expansion);
  Var<T> operator()(const Var<T>& x) const;
  int64_t macs(int h, int w) const;
};

// 3x3 stride-2 conv. Requires even spatial dims.
template <typename T>
struct Downsample {
  Conv2d<T> conv;
  Downsample() = default;
  Downsample(ParamRegistry<T>& reg, const std::string& name, int cin, int cout);
  Var<T> operator()(const Var<T>& x) const;
  int64_t macs(int h, int w) const { return conv.macs(h, w); }
};

// 1x1 conv to 4*cout followed by pixel shuffle, inverting the downsample rule.
template <typename T>
struct Upsample {
  Conv2d<T> conv;
  Upsample() = default;
  Upsample(ParamRegistry<T>& reg, const std::string& name, int cin, int cout);
  Var<T> operator()(const Var<T>& x) const { return pixel_shuffle2(conv(x)); }
  int64_t macs(int h, int w) const { return conv.macs(h, w); }
};

#define SSHNET_EXTERN_BLOCKS(T)          \
  extern template class ParamRegistry<T>; \
  extern template struct Conv2d<T>;       \
  extern template struct LayerNorm2d<T>;  \
  extern template struct Sca<T>;          \
  extern template struct NafBlock<T>;     \
  extern template struct Gdfn<T>;         \
  extern template struct Ssa<T>;          \
  extern template struct Stb<T>;          \
  extern template struct Downsample<T>;   \
  extern template struct Upsample<T>;

SSHNET_EXTERN_BLOCKS(float)
SSHNET_EXTERN_BLOCKS(double)
#undef SSHNET_EXTERN_BLOCKS

}  // namespace sshnet::nn
