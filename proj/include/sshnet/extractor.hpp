#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sshnet/image.hpp"
#include "sshnet/nn/ops.hpp"

namespace sshnet {

// Frozen perceptual feature network: a VGG-style stack of 3x3 convs, ReLUs
// and 2x2 max pools, loaded from an external weight file (never trained
// here). Gradients flow through to the *input* only.
class FeatureExtractor {
 public:
  struct Layer {
    enum class Kind { conv3x3, relu, maxpool } kind;
    int cin = 0, cout = 0;
    std::vector<float> w, b;  // conv only
  };

  static FeatureExtractor load(const std::string& path);
  void save(const std::string& path) const;

  // Builds a randomly initialized stack; stage_widths like {8,16} produce
  // conv/relu pairs separated by pools. Used for fixtures and offline smoke.
  static FeatureExtractor make_random(const std::vector<int>& stage_widths, uint64_t seed);

  // x in [0,1], shape [N,3,H,W]; returns the tapped feature maps. The input is
  // clamped and normalized with the stored per-channel statistics.
  template <typename T>
  std::vector<nn::Var<T>> features(const nn::Var<T>& x) const;

  size_t layer_count() const { return layers_.size(); }
  const std::vector<int>& taps() const { return taps_; }
  // Optional per-tap, per-channel weights for the perceptual distance.
  const std::vector<std::vector<float>>& lpips_weights() const { return lpips_weights_; }
  bool has_lpips_weights() const { return !lpips_weights_.empty(); }

  std::vector<Layer> layers_;
  std::vector<int> taps_;           // indices into layers_ (feature after that layer)
  std::array<double, 3> mean_{0.485, 0.456, 0.406};
  std::array<double, 3> std_{0.229, 0.224, 0.225};
  std::vector<std::vector<float>> lpips_weights_;
};

// LPIPS-style perceptual distance: per tap, unit-normalize feature vectors
// over channels, take weighted squared differences, average over space, sum
// over taps. Uses uniform weights when the file carries none.
double lpips(const Image& a, const Image& b, const FeatureExtractor& fx);

// Convenience: returns nullopt when the weight file is absent or unreadable.
std::optional<double> lpips_if_available(const Image& a, const Image& b,
                                         const std::string& extractor_path);

extern template std::vector<nn::Var<float>> FeatureExtractor::features<float>(
    const nn::Var<float>&) const;
extern template std::vector<nn::Var<double>> FeatureExtractor::features<double>(
    const nn::Var<double>&) const;

}  // namespace sshnet
