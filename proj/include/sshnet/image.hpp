#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sshnet {

// H x W x 3 interleaved RGB, nominal range [0,1]. Decoded files always land in
// [0,1]; synthetic intermediates (noisy images) may exceed it.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> px;  // size height*width*3
  std::string id;

  Image() = default;
  Image(int h, int w, float fill = 0.f, std::string id_ = {});

  float& at(int r, int c, int ch) { return px[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
  float at(int r, int c, int ch) const { return px[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
  size_t numel() const { return px.size(); }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// RGBA watermark template; alpha is the spatial opacity matte, 0 outside the mark.
struct WatermarkAsset {
  int height = 0;
  int width = 0;
  std::vector<float> rgba;  // size height*width*4
  std::string name;

  float& at(int r, int c, int ch) { return rgba[(static_cast<size_t>(r) * width + c) * 4 + ch]; }
  float at(int r, int c, int ch) const { return rgba[(static_cast<size_t>(r) * width + c) * 4 + ch]; }
};

enum class BitDepth { u8, u16 };

// PNG I/O. Values are clamped to [0,1] before quantization. 8- and 16-bit
// gray / gray+alpha / RGB / RGBA files are accepted on read; alpha is dropped
// when reading an Image.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path, BitDepth depth = BitDepth::u8);

// 16-bit PNG carrying an affine range in a tEXt chunk so out-of-[0,1] values
// (unclamped noisy images) round-trip. load_image transparently maps them back.
void save_image_ranged(const Image& img, const std::string& path);

WatermarkAsset load_asset(const std::string& path);
void save_asset(const WatermarkAsset& asset, const std::string& path);

// BT.601 full-range luma: Y = 0.299 R + 0.587 G + 0.114 B.
std::vector<double> to_luma_ycbcr(const Image& img);

Image clamp01(const Image& img);

// Bilinear resize of an RGBA asset; RGB and alpha are interpolated jointly so
// matte edges stay smooth.
WatermarkAsset resize_bilinear(const WatermarkAsset& asset, int out_h, int out_w);

// Single-channel bilinear resize, used for gate-map rendering.
std::vector<float> resize_bilinear_plane(const std::vector<float>& plane, int h, int w,
                                         int out_h, int out_w);

uint64_t hash_image(const Image& img);
uint64_t hash_file(const std::string& path);

// Per-role file read counters. The trainer proves the self-supervision
// firewall (clean targets never consumed in the train path) by asserting the
// "y_clean" counter stays at zero across a run.
class ReadCounters {
 public:
  static ReadCounters& instance();
  void bump(const std::string& role);
  uint64_t count(const std::string& role) const;
  void reset();

 private:
  std::map<std::string, uint64_t> counts_;
};

Image load_image_tagged(const std::string& path, const std::string& role);

}  // namespace sshnet
