#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sshnet/synth.hpp"

namespace sshnet::synth {

namespace {

// 5x7 bitmap font covering the characters used by the built-in marks.
const std::map<char, std::array<const char*, 7>>& font() {
  static const std::map<char, std::array<const char*, 7>> f = {
      {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
      {'D', {"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}},
      {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
      {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
      {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".###."}},
      {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
      {'I', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"}},
      {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
      {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
      {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
      {'N', {"#...#", "##..#", "#.#.#", "#.#.#", "#..##", "#...#", "#...#"}},
      {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
      {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
      {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
      {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
      {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
      {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
      {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
      {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"}},
      {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
      {' ', {".....", ".....", ".....", ".....", ".....", ".....", "....."}},
  };
  return f;
}

struct AlphaCanvas {
  int h = 0, w = 0;
  std::vector<float> a;
  AlphaCanvas(int h_, int w_) : h(h_), w(w_), a(static_cast<size_t>(h_) * w_, 0.f) {}
  float& at(int r, int c) { return a[static_cast<size_t>(r) * w + c]; }
  float at(int r, int c) const { return a[static_cast<size_t>(r) * w + c]; }
};

// Rasterizes text on a 5x7 grid, optionally dilated one font pixel for bold.
std::vector<std::string> text_grid(const std::string& text, bool bold) {
  const int gw = static_cast<int>(text.size()) * 6 - 1;
  std::vector<std::string> grid(7, std::string(gw, '.'));
  for (size_t ci = 0; ci < text.size(); ++ci) {
    auto it = font().find(text[ci]);
    if (it == font().end()) throw std::invalid_argument("no glyph for character");
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if (it->second[r][c] == '#') grid[r][ci * 6 + c] = '#';
  }
  if (!bold) return grid;
  std::vector<std::string> out = grid;
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < gw; ++c) {
      if (grid[r][c] != '#') continue;
      if (c + 1 < gw) out[r][c + 1] = '#';
      if (r + 1 < 7) out[r + 1][c] = '#';
    }
  return out;
}

void blit_grid(AlphaCanvas& cv, const std::vector<std::string>& grid, int top, int left,
               int cell) {
  for (size_t r = 0; r < grid.size(); ++r)
    for (size_t c = 0; c < grid[r].size(); ++c) {
      if (grid[r][c] != '#') continue;
      for (int dy = 0; dy < cell; ++dy)
        for (int dx = 0; dx < cell; ++dx) {
          int y = top + static_cast<int>(r) * cell + dy;
          int x = left + static_cast<int>(c) * cell + dx;
          if (y >= 0 && y < cv.h && x >= 0 && x < cv.w) cv.at(y, x) = 1.f;
        }
    }
}

// 3x3 box blur; a couple of passes give the mattes their soft edge.
void soften(AlphaCanvas& cv, int passes) {
  std::vector<float> tmp(cv.a.size());
  for (int p = 0; p < passes; ++p) {
    for (int r = 0; r < cv.h; ++r)
      for (int c = 0; c < cv.w; ++c) {
        float acc = 0.f;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int y = r + dy, x = c + dx;
            if (y < 0 || y >= cv.h || x < 0 || x >= cv.w) continue;
            acc += cv.at(y, x);
            ++cnt;
          }
        tmp[static_cast<size_t>(r) * cv.w + c] = acc / cnt;
      }
    cv.a = tmp;
  }
}

float smooth_band(double dist, double r, double half_width, double soft) {
  double t = std::abs(dist - r) - half_width;
  if (t <= 0) return 1.f;
  if (t >= soft) return 0.f;
  double u = t / soft;
  return static_cast<float>(1.0 - u * u * (3.0 - 2.0 * u));
}

void draw_ring(AlphaCanvas& cv, double cy, double cx, double radius, double half_width,
               double soft) {
  for (int r = 0; r < cv.h; ++r)
    for (int c = 0; c < cv.w; ++c) {
      double d = std::hypot(r - cy, c - cx);
      cv.at(r, c) = std::max(cv.at(r, c), smooth_band(d, radius, half_width, soft));
    }
}

void draw_diamond(AlphaCanvas& cv, double cy, double cx, double radius, double half_width,
                  double soft) {
  for (int r = 0; r < cv.h; ++r)
    for (int c = 0; c < cv.w; ++c) {
      double d = std::abs(r - cy) + std::abs(c - cx);
      cv.at(r, c) = std::max(cv.at(r, c), smooth_band(d, radius, half_width, soft));
    }
}

void draw_bar(AlphaCanvas& cv, double y0, double x0, double y1, double x1, double half_width,
              double soft) {
  double vy = y1 - y0, vx = x1 - x0;
  double len2 = vy * vy + vx * vx;
  for (int r = 0; r < cv.h; ++r)
    for (int c = 0; c < cv.w; ++c) {
      double t = ((r - y0) * vy + (c - x0) * vx) / len2;
      t = std::min(std::max(t, 0.0), 1.0);
      double d = std::hypot(r - (y0 + t * vy), c - (x0 + t * vx));
      cv.at(r, c) = std::max(cv.at(r, c), smooth_band(d, 0.0, half_width, soft));
    }
}

WatermarkAsset colorize(const AlphaCanvas& cv, float cr, float cg, float cb,
                        const std::string& name) {
  WatermarkAsset a;
  a.height = cv.h;
  a.width = cv.w;
  a.name = name;
  a.rgba.resize(static_cast<size_t>(cv.h) * cv.w * 4);
  for (int r = 0; r < cv.h; ++r)
    for (int c = 0; c < cv.w; ++c) {
      a.at(r, c, 0) = cr;
      a.at(r, c, 1) = cg;
      a.at(r, c, 2) = cb;
      a.at(r, c, 3) = cv.at(r, c);
    }
  return a;
}

WatermarkAsset text_asset(const std::string& text, bool bold, int cell, float cr, float cg,
                          float cb, const std::string& name) {
  auto grid = text_grid(text, bold);
  int margin = 2 * cell;
  AlphaCanvas cv(7 * cell + 2 * margin, static_cast<int>(grid[0].size()) * cell + 2 * margin);
  blit_grid(cv, grid, margin, margin, cell);
  soften(cv, 2);
  return colorize(cv, cr, cg, cb, name);
}

}  // namespace

std::vector<WatermarkAsset> make_default_assets() {
  std::vector<WatermarkAsset> assets;

  // Six text marks, alternating weight.
  assets.push_back(text_asset("SAMPLE", false, 5, 1.f, 1.f, 1.f, "text-sample"));
  assets.push_back(text_asset("PREVIEW", true, 5, 0.08f, 0.08f, 0.08f, "text-preview-bold"));
  assets.push_back(text_asset("COPYRIGHT", false, 4, 0.85f, 0.85f, 0.9f, "text-copyright"));
  assets.push_back(text_asset("DRAFT", true, 6, 0.85f, 0.15f, 0.15f, "text-draft-bold"));
  assets.push_back(text_asset("PROTECTED", false, 4, 0.15f, 0.25f, 0.8f, "text-protected"));
  assets.push_back(text_asset("CONFIDENTIAL", true, 3, 0.92f, 0.76f, 0.2f,
                              "text-confidential-bold"));

  // Three geometric logos.
  {
    AlphaCanvas cv(120, 120);
    draw_ring(cv, 60, 60, 44, 6, 5);
    draw_ring(cv, 60, 60, 16, 10, 5);
    assets.push_back(colorize(cv, 0.95f, 0.95f, 0.95f, "logo-rings"));
  }
  {
    AlphaCanvas cv(128, 128);
    draw_bar(cv, 16, 16, 112, 112, 7, 6);
    draw_bar(cv, 16, 112, 112, 16, 7, 6);
    assets.push_back(colorize(cv, 0.1f, 0.6f, 0.3f, "logo-cross"));
  }
  {
    AlphaCanvas cv(120, 120);
    draw_diamond(cv, 60, 60, 48, 7, 6);
    assets.push_back(colorize(cv, 0.7f, 0.2f, 0.65f, "logo-diamond"));
  }

  // Three mixed text + logo marks.
  {
    AlphaCanvas cv(150, 140);
    draw_ring(cv, 52, 70, 38, 5, 5);
    blit_grid(cv, text_grid("PROOF", true), 108, 70 - (5 * 6 - 1) * 4 / 2, 4);
    soften(cv, 2);
    assets.push_back(colorize(cv, 1.f, 1.f, 1.f, "mix-proof"));
  }
  {
    AlphaCanvas cv(150, 140);
    draw_diamond(cv, 50, 70, 40, 6, 5);
    blit_grid(cv, text_grid("MEDIA", false), 106, 70 - (5 * 6 - 1) * 4 / 2, 4);
    soften(cv, 2);
    assets.push_back(colorize(cv, 0.2f, 0.2f, 0.25f, "mix-media"));
  }
  {
    AlphaCanvas cv(150, 140);
    draw_ring(cv, 50, 70, 36, 4, 4);
    draw_ring(cv, 50, 70, 24, 4, 4);
    blit_grid(cv, text_grid("STOCK", false), 106, 70 - (5 * 6 - 1) * 4 / 2, 4);
    soften(cv, 2);
    assets.push_back(colorize(cv, 0.9f, 0.55f, 0.15f, "mix-stock"));
  }

  return assets;
}

}  // namespace sshnet::synth
