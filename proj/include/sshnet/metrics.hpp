#pragma once

#include <optional>
#include <string>

#include "sshnet/image.hpp"

namespace sshnet {

struct MetricReport {
  std::string id;
  double psnr = 0.0;  // +inf when MSE == 0
  double ssim = 0.0;
  std::optional<double> lpips;  // absent when no perceptual extractor is installed
};

// 10*log10(max_val^2 / MSE) over all RGB samples; +inf sentinel at zero MSE.
// Aggregation code must skip the sentinel explicitly.
double psnr(const Image& a, const Image& b, double max_val = 1.0);

// Mean SSIM over the BT.601 luma channel, 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, data range 1.0. Windows are evaluated fully inside the
// image (valid mode). Requires min(H,W) >= 11.
double ssim_y(const Image& a, const Image& b);

// PSNR on luma only; off by default, kept behind the metrics config flag.
double psnr_luma(const Image& a, const Image& b, double max_val = 1.0);

}  // namespace sshnet
