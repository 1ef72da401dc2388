#include "sshnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sshnet {

double psnr(const Image& a, const Image& b, double max_val) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = static_cast<double>(a.px[i]) - b.px[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.px.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr_luma(const Image& a, const Image& b, double max_val) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr_luma: shape mismatch");
  auto ya = to_luma_ycbcr(a);
  auto yb = to_luma_ycbcr(b);
  double mse = 0.0;
  for (size_t i = 0; i < ya.size(); ++i) {
    double d = ya[i] - yb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ya.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

std::vector<double> gaussian_kernel_11() {
  constexpr int n = 11;
  constexpr double sigma = 1.5;
  std::vector<double> k(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = i - (n - 1) / 2.0;
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-mode Gaussian filter on an H x W plane.
std::vector<double> gauss_valid(const std::vector<double>& p, int h, int w, int& oh, int& ow) {
  static const std::vector<double> k = gaussian_kernel_11();
  const int n = 11;
  ow = w - n + 1;
  oh = h - n + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * p[static_cast<size_t>(r) * w + c + i];
      tmp[static_cast<size_t>(r) * ow + c] = s;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<size_t>(r + i) * ow + c];
      out[static_cast<size_t>(r) * ow + c] = s;
    }
  return out;
}

}  // namespace

double ssim_y(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim_y: shape mismatch");
  if (a.height < 11 || a.width < 11)
    throw std::invalid_argument("ssim_y: image smaller than the 11x11 window");

  auto x = to_luma_ycbcr(a);
  auto y = to_luma_ycbcr(b);
  const int h = a.height, w = a.width;
  size_t n = x.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  int oh = 0, ow = 0;
  auto mu_x = gauss_valid(x, h, w, oh, ow);
  auto mu_y = gauss_valid(y, h, w, oh, ow);
  auto sxx = gauss_valid(xx, h, w, oh, ow);
  auto syy = gauss_valid(yy, h, w, oh, ow);
  auto sxy = gauss_valid(xy, h, w, oh, ow);

  constexpr double c1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
  constexpr double c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (size_t i = 0; i < mu_x.size(); ++i) {
    double mx = mu_x[i], my = mu_y[i];
    double vx = sxx[i] - mx * mx;
    double vy = syy[i] - my * my;
    double cov = sxy[i] - mx * my;
    double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
    double den = (mx * mx + my * my + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_x.size());
}

}  // namespace sshnet
