#include "sshnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "sshnet/rng.hpp"

namespace sshnet {

Image::Image(int h, int w, float fill, std::string id_)
    : height(h), width(w), px(static_cast<size_t>(h) * w * 3, fill), id(std::move(id_)) {
  if (h < 1 || w < 1) throw std::invalid_argument("Image: height and width must be >= 1");
}

namespace {

constexpr const char* kRangeKey = "sshnet-range";

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct DecodedPng {
  int height = 0;
  int width = 0;
  int channels = 0;  // after expansion: 1, 2, 3 or 4
  int bit_depth = 0;  // 8 or 16
  std::vector<uint16_t> samples;  // interleaved, native scale (0..255 or 0..65535)
  bool has_range = false;
  double range_lo = 0.0, range_hi = 1.0;
};

DecodedPng decode_png(const std::string& path) {
  DecodedPng out;
  PngReader r;
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) throw std::runtime_error("cannot open for reading: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path);

  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw std::runtime_error("png_create_read_struct failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG decode error: " + path);

  png_init_io(r.png, r.fp);
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, color_type = 0, interlace = 0;
  png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, &interlace, nullptr, nullptr);
  if (interlace != PNG_INTERLACE_NONE)
    throw std::runtime_error("interlaced PNG not supported: " + path);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  if (bit_depth == 16) png_set_swap(r.png);  // little-endian in memory
  png_read_update_info(r.png, r.info);

  png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  int channels = png_get_channels(r.png, r.info);

  out.height = static_cast<int>(h);
  out.width = static_cast<int>(w);
  out.channels = channels;
  out.bit_depth = bit_depth;

  size_t row_samples = static_cast<size_t>(w) * channels;
  out.samples.resize(row_samples * h);
  std::vector<png_bytep> rows(h);
  std::vector<uint8_t> raw8;
  if (bit_depth == 8) {
    raw8.resize(row_samples * h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw8.data() + y * row_samples;
  } else {
    for (png_uint_32 y = 0; y < h; ++y)
      rows[y] = reinterpret_cast<png_bytep>(out.samples.data() + y * row_samples);
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, r.info);

  if (bit_depth == 8)
    for (size_t i = 0; i < raw8.size(); ++i) out.samples[i] = raw8[i];

  png_textp text = nullptr;
  int num_text = 0;
  if (png_get_text(r.png, r.info, &text, &num_text) > 0) {
    for (int i = 0; i < num_text; ++i) {
      if (text[i].key && std::strcmp(text[i].key, kRangeKey) == 0 && text[i].text) {
        std::istringstream ss(text[i].text);
        double lo, hi;
        if (ss >> lo >> hi && hi > lo) {
          out.has_range = true;
          out.range_lo = lo;
          out.range_hi = hi;
        }
      }
    }
  }
  return out;
}

void encode_png(const std::string& path, int h, int w, int channels, BitDepth depth,
                const std::vector<uint16_t>& samples, const std::string* range_text) {
  PngWriter wr;
  wr.fp = std::fopen(path.c_str(), "wb");
  if (!wr.fp) throw std::runtime_error("cannot open for writing: " + path);
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!wr.png) throw std::runtime_error("png_create_write_struct failed");
  wr.info = png_create_info_struct(wr.png);
  if (!wr.info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(wr.png))) throw std::runtime_error("PNG encode error: " + path);

  int color_type = channels == 1   ? PNG_COLOR_TYPE_GRAY
                   : channels == 3 ? PNG_COLOR_TYPE_RGB
                                   : PNG_COLOR_TYPE_RGBA;
  int bits = depth == BitDepth::u8 ? 8 : 16;

  png_init_io(wr.png, wr.fp);
  png_set_IHDR(wr.png, wr.info, w, h, bits, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  png_text text;
  std::string text_buf;
  if (range_text) {
    text_buf = *range_text;
    std::memset(&text, 0, sizeof(text));
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>(kRangeKey);
    text.text = text_buf.data();
    text.text_length = text_buf.size();
    png_set_text(wr.png, wr.info, &text, 1);
  }
  png_write_info(wr.png, wr.info);
  if (bits == 16) png_set_swap(wr.png);

  size_t row_samples = static_cast<size_t>(w) * channels;
  std::vector<uint8_t> raw8;
  std::vector<png_bytep> rows(h);
  if (bits == 8) {
    raw8.resize(row_samples * h);
    for (size_t i = 0; i < raw8.size(); ++i) raw8[i] = static_cast<uint8_t>(samples[i]);
    for (int y = 0; y < h; ++y) rows[y] = raw8.data() + static_cast<size_t>(y) * row_samples;
  } else {
    for (int y = 0; y < h; ++y)
      rows[y] = reinterpret_cast<png_bytep>(
          const_cast<uint16_t*>(samples.data() + static_cast<size_t>(y) * row_samples));
  }
  png_write_image(wr.png, rows.data());
  png_write_end(wr.png, wr.info);
}

inline uint16_t quantize(float v, float maxq) {
  float c = std::min(std::max(v, 0.f), 1.f);
  return static_cast<uint16_t>(std::lround(static_cast<double>(c) * maxq));
}

}  // namespace

Image load_image(const std::string& path) {
  DecodedPng d = decode_png(path);
  Image img(d.height, d.width);
  img.id = path;
  double maxq = d.bit_depth == 8 ? 255.0 : 65535.0;
  size_t n = static_cast<size_t>(d.height) * d.width;
  for (size_t i = 0; i < n; ++i) {
    double r, g, b;
    const uint16_t* s = d.samples.data() + i * d.channels;
    switch (d.channels) {
      case 1: r = g = b = s[0]; break;
      case 2: r = g = b = s[0]; break;
      case 3:
      case 4: r = s[0]; g = s[1]; b = s[2]; break;
      default: throw std::runtime_error("unsupported channel count in " + path);
    }
    double scale = 1.0 / maxq;
    double fr = r * scale, fg = g * scale, fb = b * scale;
    if (d.has_range) {
      double span = d.range_hi - d.range_lo;
      fr = d.range_lo + fr * span;
      fg = d.range_lo + fg * span;
      fb = d.range_lo + fb * span;
    }
    img.px[i * 3 + 0] = static_cast<float>(fr);
    img.px[i * 3 + 1] = static_cast<float>(fg);
    img.px[i * 3 + 2] = static_cast<float>(fb);
  }
  return img;
}

void save_image(const Image& img, const std::string& path, BitDepth depth) {
  if (img.height < 1 || img.width < 1 || img.px.size() != static_cast<size_t>(img.height) * img.width * 3)
    throw std::invalid_argument("save_image: malformed image");
  float maxq = depth == BitDepth::u8 ? 255.f : 65535.f;
  std::vector<uint16_t> samples(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) samples[i] = quantize(img.px[i], maxq);
  encode_png(path, img.height, img.width, 3, depth, samples, nullptr);
}

void save_image_ranged(const Image& img, const std::string& path) {
  if (img.px.empty()) throw std::invalid_argument("save_image_ranged: empty image");
  float lo = img.px[0], hi = img.px[0];
  for (float v : img.px) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Stay on the plain [0,1] mapping when the data already fits it.
  double rlo = std::min(0.0, static_cast<double>(lo));
  double rhi = std::max(1.0, static_cast<double>(hi));
  bool plain = rlo == 0.0 && rhi == 1.0;

  std::vector<uint16_t> samples(img.px.size());
  double span = rhi - rlo;
  for (size_t i = 0; i < img.px.size(); ++i) {
    double t = (static_cast<double>(img.px[i]) - rlo) / span;
    samples[i] = static_cast<uint16_t>(std::lround(std::min(std::max(t, 0.0), 1.0) * 65535.0));
  }
  if (plain) {
    encode_png(path, img.height, img.width, 3, BitDepth::u16, samples, nullptr);
  } else {
    std::ostringstream ss;
    ss.precision(17);
    ss << rlo << " " << rhi;
    std::string text = ss.str();
    encode_png(path, img.height, img.width, 3, BitDepth::u16, samples, &text);
  }
}

WatermarkAsset load_asset(const std::string& path) {
  DecodedPng d = decode_png(path);
  WatermarkAsset a;
  a.height = d.height;
  a.width = d.width;
  a.name = path;
  a.rgba.resize(static_cast<size_t>(d.height) * d.width * 4);
  double maxq = d.bit_depth == 8 ? 255.0 : 65535.0;
  size_t n = static_cast<size_t>(d.height) * d.width;
  for (size_t i = 0; i < n; ++i) {
    const uint16_t* s = d.samples.data() + i * d.channels;
    double r, g, b, alpha;
    switch (d.channels) {
      case 1: r = g = b = s[0]; alpha = maxq; break;
      case 2: r = g = b = s[0]; alpha = s[1]; break;
      case 3: r = s[0]; g = s[1]; b = s[2]; alpha = maxq; break;
      case 4: r = s[0]; g = s[1]; b = s[2]; alpha = s[3]; break;
      default: throw std::runtime_error("unsupported channel count in " + path);
    }
    a.rgba[i * 4 + 0] = static_cast<float>(r / maxq);
    a.rgba[i * 4 + 1] = static_cast<float>(g / maxq);
    a.rgba[i * 4 + 2] = static_cast<float>(b / maxq);
    a.rgba[i * 4 + 3] = static_cast<float>(alpha / maxq);
  }
  return a;
}

void save_asset(const WatermarkAsset& asset, const std::string& path) {
  std::vector<uint16_t> samples(asset.rgba.size());
  for (size_t i = 0; i < asset.rgba.size(); ++i) samples[i] = quantize(asset.rgba[i], 255.f);
  encode_png(path, asset.height, asset.width, 4, BitDepth::u8, samples, nullptr);
}

std::vector<double> to_luma_ycbcr(const Image& img) {
  size_t n = static_cast<size_t>(img.height) * img.width;
  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) {
    y[i] = 0.299 * img.px[i * 3] + 0.587 * img.px[i * 3 + 1] + 0.114 * img.px[i * 3 + 2];
  }
  return y;
}

Image clamp01(const Image& img) {
  Image out = img;
  for (float& v : out.px) v = std::min(std::max(v, 0.f), 1.f);
  return out;
}

WatermarkAsset resize_bilinear(const WatermarkAsset& asset, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: bad output size");
  WatermarkAsset out;
  out.height = out_h;
  out.width = out_w;
  out.name = asset.name;
  out.rgba.resize(static_cast<size_t>(out_h) * out_w * 4);
  // Align-corners-false sampling.
  double sy = static_cast<double>(asset.height) / out_h;
  double sx = static_cast<double>(asset.width) / out_w;
  for (int r = 0; r < out_h; ++r) {
    double fy = (r + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, asset.height - 1);
    int y1c = std::clamp(y0 + 1, 0, asset.height - 1);
    for (int c = 0; c < out_w; ++c) {
      double fx = (c + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, asset.width - 1);
      int x1c = std::clamp(x0 + 1, 0, asset.width - 1);
      for (int ch = 0; ch < 4; ++ch) {
        double v00 = asset.at(y0c, x0c, ch), v01 = asset.at(y0c, x1c, ch);
        double v10 = asset.at(y1c, x0c, ch), v11 = asset.at(y1c, x1c, ch);
        double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        out.at(r, c, ch) = static_cast<float>(v);
      }
    }
  }
  return out;
}

std::vector<float> resize_bilinear_plane(const std::vector<float>& plane, int h, int w,
                                         int out_h, int out_w) {
  std::vector<float> out(static_cast<size_t>(out_h) * out_w);
  double sy = static_cast<double>(h) / out_h;
  double sx = static_cast<double>(w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    double fy = (r + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, h - 1);
    int y1c = std::clamp(y0 + 1, 0, h - 1);
    for (int c = 0; c < out_w; ++c) {
      double fx = (c + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, w - 1);
      int x1c = std::clamp(x0 + 1, 0, w - 1);
      double v = (1 - wy) * ((1 - wx) * plane[static_cast<size_t>(y0c) * w + x0c] +
                             wx * plane[static_cast<size_t>(y0c) * w + x1c]) +
                 wy * ((1 - wx) * plane[static_cast<size_t>(y1c) * w + x0c] +
                       wx * plane[static_cast<size_t>(y1c) * w + x1c]);
      out[static_cast<size_t>(r) * out_w + c] = static_cast<float>(v);
    }
  }
  return out;
}

uint64_t hash_image(const Image& img) {
  uint64_t h = fnv1a64(&img.height, sizeof(img.height));
  h = fnv1a64(&img.width, sizeof(img.width), h);
  h = fnv1a64(img.px.data(), img.px.size() * sizeof(float), h);
  return h;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("hash_file: cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64(buf.data(), buf.size());
}

ReadCounters& ReadCounters::instance() {
  static ReadCounters c;
  return c;
}

void ReadCounters::bump(const std::string& role) { counts_[role]++; }

uint64_t ReadCounters::count(const std::string& role) const {
  auto it = counts_.find(role);
  return it == counts_.end() ? 0 : it->second;
}

void ReadCounters::reset() { counts_.clear(); }

Image load_image_tagged(const std::string& path, const std::string& role) {
  ReadCounters::instance().bump(role);
  return load_image(path);
}

}  // namespace sshnet
