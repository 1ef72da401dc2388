#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sshnet/config.hpp"
#include "sshnet/image.hpp"
#include "sshnet/nn/blocks.hpp"

namespace sshnet {

template <typename T>
struct SshNetOutputs {
  nn::Var<T> y_n;    // noise-removal head (no residual)
  nn::Var<T> y_wn;   // watermark+noise head (no residual)
  nn::Var<T> y_hat;  // fused head with global input residual
  nn::Var<T> gate;   // FFU gating signal, each value in (0,1)
};

struct ComplexityPart {
  std::string name;
  int64_t params = 0;
  int64_t macs = 0;
};

struct ComplexityReport {
  int64_t params = 0;
  int64_t macs = 0;     // multiply-accumulates at the probed resolution
  int64_t flops = 0;    // 2 * macs
  int height = 0, width = 0;
  std::vector<ComplexityPart> parts;
};

// The assembled dual-decoder restoration network. Input feature maps are
// [N,3,H,W] with H and W divisible by 16 (two encoder downsamples plus two
// more inside the transformer U-Net); callers pad otherwise.
template <typename T>
class SshNet {
 public:
  explicit SshNet(const ModelConfig& cfg, uint64_t init_seed = 0);

  SshNetOutputs<T> forward(const nn::Var<T>& x) const;

  // Which head serves as the restored image for this variant.
  nn::Var<T> primary_output(const SshNetOutputs<T>& outs) const;

  nn::ParamRegistry<T>& params() { return reg_; }
  const nn::ParamRegistry<T>& params() const { return reg_; }
  int64_t param_count() const { return reg_.param_count(); }
  const ModelConfig& config() const { return cfg_; }

  ComplexityReport complexity(int h, int w) const;

  bool has_nrd() const;
  bool has_wnrd() const;
  bool has_ffu() const;

 private:
  struct Encoder {
    std::vector<nn::NafBlock<T>> s1, s2;
    nn::Downsample<T> down1, down2;
  };

  nn::Var<T> run_encoder(const Encoder& enc, const nn::Var<T>& f0, nn::Var<T>& skip1,
                         nn::Var<T>& skip2) const;
  void build_encoder(Encoder& enc, const std::string& prefix);

  ModelConfig cfg_;
  nn::ParamRegistry<T> reg_;

  nn::Conv2d<T> stem_;
  Encoder se_;
  std::unique_ptr<Encoder> se_nrd_;  // dual_encoders only: private encoder for the NRD

  // noise removal decoder
  std::vector<nn::NafBlock<T>> nrd_mid_;
  nn::Upsample<T> nrd_up1_, nrd_up2_;
  nn::Conv2d<T> nrd_fuse1_, nrd_fuse2_;
  std::vector<nn::NafBlock<T>> nrd_d2_, nrd_d1_;

  // watermark+noise removal decoder: transformer U-Net then conv decoder
  std::vector<nn::Stb<T>> st_enc1_, st_enc2_, st_mid_, st_dec2_, st_dec1_;
  nn::Downsample<T> st_down1_, st_down2_;
  nn::Upsample<T> st_up1_, st_up2_;
  nn::Conv2d<T> st_fuse1_, st_fuse2_;
  nn::Upsample<T> wnrd_up1_, wnrd_up2_;
  nn::Conv2d<T> wnrd_fuse1_, wnrd_fuse2_;
  std::vector<nn::NafBlock<T>> wnrd_d2_, wnrd_d1_;

  // feature fusion unit
  nn::Conv2d<T> gate1_, gate2_;
  std::unique_ptr<nn::NafBlock<T>> ffu_block_;

  nn::Conv2d<T> head_n_, head_wn_, head_hat_;
};

// Reflect-pads to the next multiple of 16, runs the network, crops back and
// clamps the variant's primary output to [0,1].
template <typename T>
Image infer_tiled(const SshNet<T>& model, const Image& img);

// Channel-mean of the FFU gate rendered at input resolution, values in [0,1].
// Returns the heat map plane; fraction_below counts raw gate weights < 0.5.
struct GateMapResult {
  std::vector<float> plane;  // H*W
  int height = 0, width = 0;
  double fraction_below_half = 0.0;
  double mean = 0.0, stddev = 0.0;
};

template <typename T>
GateMapResult extract_gate_maps(const SshNet<T>& model, const Image& img);

#define SSHNET_EXTERN_MODEL(T)                                       \
  extern template class SshNet<T>;                                   \
  extern template Image infer_tiled<T>(const SshNet<T>&, const Image&); \
  extern template GateMapResult extract_gate_maps<T>(const SshNet<T>&, const Image&);

SSHNET_EXTERN_MODEL(float)
SSHNET_EXTERN_MODEL(double)
#undef SSHNET_EXTERN_MODEL

// Image <-> tensor bridges ([1,3,H,W], RGB planes).
template <typename T>
nn::Tensor<T> image_to_tensor(const Image& img);
template <typename T>
Image tensor_to_image(const nn::Tensor<T>& t, int sample = 0);

extern template nn::Tensor<float> image_to_tensor<float>(const Image&);
extern template nn::Tensor<double> image_to_tensor<double>(const Image&);
extern template Image tensor_to_image<float>(const nn::Tensor<float>&, int);
extern template Image tensor_to_image<double>(const nn::Tensor<double>&, int);

}  // namespace sshnet
