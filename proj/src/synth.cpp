#include "sshnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sshnet::synth {

// ---- ranges -------------------------------------------------------------------

DrawRange DrawRange::discrete(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("DrawRange: empty choice set");
  DrawRange r;
  r.choices = std::move(values);
  return r;
}

DrawRange DrawRange::range(double lo, double hi) {
  if (hi < lo) throw std::invalid_argument("DrawRange: hi < lo");
  DrawRange r;
  r.lo = lo;
  r.hi = hi;
  r.uniform = true;
  return r;
}

DrawRange DrawRange::parse(const std::string& text) {
  auto colon = text.find(':');
  if (colon != std::string::npos) {
    return range(std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1)));
  }
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) vals.push_back(std::stod(tok));
  }
  return discrete(std::move(vals));
}

double DrawRange::draw(Rng& rng) const {
  if (uniform) return rng.uniform(lo, hi);
  if (choices.size() == 1) return choices[0];
  return choices[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(choices.size()) - 1))];
}

std::string DrawRange::describe() const {
  if (uniform) return std::to_string(lo) + ":" + std::to_string(hi);
  std::string s;
  for (size_t i = 0; i < choices.size(); ++i) s += (i ? "," : "") + std::to_string(choices[i]);
  return s;
}

// ---- compositing ----------------------------------------------------------------

Image composite_watermark(const Image& base, const WatermarkAsset& asset,
                          const CorruptionSpec& spec) {
  int sh = std::max(1, static_cast<int>(std::lround(asset.height * spec.scale)));
  int sw = std::max(1, static_cast<int>(std::lround(asset.width * spec.scale)));
  if (spec.row < 0 || spec.col < 0 || spec.row + sh > base.height || spec.col + sw > base.width)
    throw std::invalid_argument("composite_watermark: footprint exceeds image bounds");

  WatermarkAsset scaled =
      (sh == asset.height && sw == asset.width) ? asset : resize_bilinear(asset, sh, sw);

  Image out = base;
  for (int r = 0; r < sh; ++r) {
    for (int c = 0; c < sw; ++c) {
      float a = static_cast<float>(spec.transparency) * scaled.at(r, c, 3);
      if (a == 0.f) continue;
      for (int ch = 0; ch < 3; ++ch) {
        float v = a * scaled.at(r, c, ch) + (1.f - a) * out.at(spec.row + r, spec.col + c, ch);
        out.at(spec.row + r, spec.col + c, ch) = std::min(std::max(v, 0.f), 1.f);
      }
    }
  }
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma_255, const SeedSpec& seed) {
  if (sigma_255 < 0) throw std::invalid_argument("add_gaussian_noise: negative sigma");
  Image out = img;
  if (sigma_255 == 0.0) return out;
  Rng rng(seed);
  const double s = sigma_255 / 255.0;
  for (auto& v : out.px) v = static_cast<float>(v + rng.normal(0.0, s));
  return out;
}

// ---- drawing -----------------------------------------------------------------------

CorruptionSpec draw_spec(const Image& base, const std::vector<WatermarkAsset>& assets,
                         const CorruptionRanges& ranges, Rng& rng, int pin_watermark) {
  if (assets.empty()) throw std::invalid_argument("draw_spec: no watermark assets");
  CorruptionSpec spec;
  spec.transparency = ranges.transparency.draw(rng);
  spec.noise_sigma = ranges.noise_sigma.draw(rng);

  const double img_area = static_cast<double>(base.height) * base.width;
  for (int attempt = 0; attempt < ranges.max_placement_retries; ++attempt) {
    int idx = pin_watermark >= 0
                  ? pin_watermark
                  : static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(assets.size()) - 1));
    const WatermarkAsset& asset = assets.at(idx);
    double scale = rng.uniform(ranges.scale_lo, ranges.scale_hi);
    int sh = std::max(1, static_cast<int>(std::lround(asset.height * scale)));
    int sw = std::max(1, static_cast<int>(std::lround(asset.width * scale)));
    double coverage = sh * sw / img_area;
    if (sh > base.height || sw > base.width || coverage > ranges.coverage_max) continue;
    spec.watermark_index = idx;
    spec.watermark_name = asset.name;
    spec.scale = scale;
    spec.coverage = coverage;
    spec.row = static_cast<int>(rng.uniform_int(0, base.height - sh));
    spec.col = static_cast<int>(rng.uniform_int(0, base.width - sw));
    return spec;
  }
  std::ostringstream msg;
  msg << "draw_spec: no valid placement after " << ranges.max_placement_retries
      << " retries (image " << base.height << "x" << base.width << ", scale ["
      << ranges.scale_lo << "," << ranges.scale_hi << "], coverage max "
      << ranges.coverage_max;
  if (pin_watermark >= 0)
    msg << ", pinned asset " << assets.at(pin_watermark).name << " "
        << assets.at(pin_watermark).height << "x" << assets.at(pin_watermark).width;
  msg << ")";
  throw std::runtime_error(msg.str());
}

SamplePair make_sample(const Image& y_clean, const std::vector<WatermarkAsset>& assets,
                       const CorruptionRanges& ranges, const SeedSpec& seed, PairingMode mode,
                       int pin_watermark) {
  SamplePair pair;
  pair.y_clean = y_clean;

  Rng spec_rng(seed.fork("spec"));
  pair.spec = draw_spec(y_clean, assets, ranges, spec_rng, pin_watermark);
  pair.x_w = composite_watermark(y_clean, assets.at(pair.spec.watermark_index), pair.spec);
  pair.x_wn = add_gaussian_noise(pair.x_w, pair.spec.noise_sigma, seed.fork("noise"));

  Rng extra_rng(seed.fork("extra"));
  pair.extra_spec = draw_spec(y_clean, assets, ranges, extra_rng);
  pair.extra_spec.noise_sigma = 0.0;  // reference stays noise-free
  const WatermarkAsset& extra = assets.at(pair.extra_spec.watermark_index);
  pair.y_w = mode == PairingMode::literal ? composite_watermark(pair.x_w, extra, pair.extra_spec)
                                          : composite_watermark(y_clean, extra, pair.extra_spec);
  return pair;
}

// ---- synthetic scenes ------------------------------------------------------------

Image make_synthetic_scene(int h, int w, const SeedSpec& seed) {
  Rng rng(seed);
  Image img(h, w);

  // Multi-octave value noise per channel over a shared lattice.
  const int octaves = 4;
  for (int oct = 0; oct < octaves; ++oct) {
    int cells = 2 << oct;  // 2,4,8,16
    double amp = 0.5 / (1 << oct);
    std::vector<float> lattice(static_cast<size_t>(cells + 1) * (cells + 1) * 3);
    for (auto& v : lattice) v = static_cast<float>(rng.uniform());
    auto lat = [&](int r, int c, int ch) {
      return lattice[(static_cast<size_t>(r) * (cells + 1) + c) * 3 + ch];
    };
    for (int r = 0; r < h; ++r) {
      double fy = static_cast<double>(r) / h * cells;
      int y0 = std::min(static_cast<int>(fy), cells - 1);
      double wy = fy - y0;
      wy = wy * wy * (3 - 2 * wy);
      for (int c = 0; c < w; ++c) {
        double fx = static_cast<double>(c) / w * cells;
        int x0 = std::min(static_cast<int>(fx), cells - 1);
        double wx = fx - x0;
        wx = wx * wx * (3 - 2 * wx);
        for (int ch = 0; ch < 3; ++ch) {
          double v = (1 - wy) * ((1 - wx) * lat(y0, x0, ch) + wx * lat(y0, x0 + 1, ch)) +
                     wy * ((1 - wx) * lat(y0 + 1, x0, ch) + wx * lat(y0 + 1, x0 + 1, ch));
          img.at(r, c, ch) += static_cast<float>(amp * v);
        }
      }
    }
  }

  // A few soft discs for structure and hard-ish edges.
  int discs = static_cast<int>(rng.uniform_int(2, 4));
  for (int k = 0; k < discs; ++k) {
    double cy = rng.uniform(0.15, 0.85) * h;
    double cx = rng.uniform(0.15, 0.85) * w;
    double rad = rng.uniform(0.08, 0.22) * std::min(h, w);
    float col[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                    static_cast<float>(rng.uniform())};
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double d = std::hypot(r - cy, c - cx);
        if (d > rad + 2) continue;
        double t = d < rad - 2 ? 1.0 : (rad + 2 - d) / 4.0;
        for (int ch = 0; ch < 3; ++ch)
          img.at(r, c, ch) =
              static_cast<float>((1 - 0.8 * t) * img.at(r, c, ch) + 0.8 * t * col[ch]);
      }
  }

  // Squash into (0.02, 0.98) so later clamping stays inactive.
  float lo = img.px[0], hi = img.px[0];
  for (float v : img.px) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  float span = std::max(hi - lo, 1e-6f);
  for (auto& v : img.px) v = 0.02f + 0.96f * (v - lo) / span;
  return img;
}

// ---- manifest -----------------------------------------------------------------------

namespace {

json spec_to_json(const CorruptionSpec& s) {
  return json{{"transparency", s.transparency}, {"scale", s.scale},
              {"coverage", s.coverage},         {"row", s.row},
              {"col", s.col},                   {"watermark_index", s.watermark_index},
              {"watermark_name", s.watermark_name}, {"noise_sigma", s.noise_sigma}};
}

CorruptionSpec spec_from_json(const json& j) {
  CorruptionSpec s;
  s.transparency = j.at("transparency").get<double>();
  s.scale = j.at("scale").get<double>();
  s.coverage = j.at("coverage").get<double>();
  s.row = j.at("row").get<int>();
  s.col = j.at("col").get<int>();
  s.watermark_index = j.at("watermark_index").get<int>();
  s.watermark_name = j.value("watermark_name", "");
  s.noise_sigma = j.at("noise_sigma").get<double>();
  return s;
}

}  // namespace

Manifest Manifest::load(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open manifest: " + manifest_path);
  Manifest m;
  m.dir = fs::path(manifest_path).parent_path().string();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.source = j.value("source", "");
    const auto& p = j.at("paths");
    e.x_wn = p.at("x_wn").get<std::string>();
    e.x_w = p.at("x_w").get<std::string>();
    e.y_w = p.at("y_w").get<std::string>();
    e.y_clean = p.value("y_clean", "");
    e.spec = spec_from_json(j.at("spec"));
    e.extra_spec = spec_from_json(j.at("extra_spec"));
    e.seed = j.at("seed").get<uint64_t>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

void Manifest::save(const std::string& manifest_path) const {
  std::ofstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot write manifest: " + manifest_path);
  for (const auto& e : entries) {
    json j{{"id", e.id},
           {"split", e.split},
           {"source", e.source},
           {"paths",
            {{"x_wn", e.x_wn}, {"x_w", e.x_w}, {"y_w", e.y_w}, {"y_clean", e.y_clean}}},
           {"spec", spec_to_json(e.spec)},
           {"extra_spec", spec_to_json(e.extra_spec)},
           {"seed", e.seed}};
    f << j.dump() << "\n";
  }
}

std::string Manifest::resolve(const std::string& rel) const {
  if (rel.empty()) return {};
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(dir) / p).string();
}

// ---- corpus builder --------------------------------------------------------------------

Manifest build_corpus(const std::string& image_dir, const std::vector<WatermarkAsset>& assets,
                      const CorpusOptions& options, const std::string& out_dir,
                      const SeedSpec& seed) {
  if (assets.empty()) throw std::invalid_argument("build_corpus: no watermark assets");
  if (!fs::is_directory(image_dir))
    throw std::runtime_error("build_corpus: image directory not found: " + image_dir);

  std::vector<fs::path> files;
  for (const auto& ent : fs::directory_iterator(image_dir)) {
    if (!ent.is_regular_file()) continue;
    auto ext = ent.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") files.push_back(ent.path());
  }
  if (files.empty()) throw std::runtime_error("build_corpus: no PNG images in " + image_dir);
  std::sort(files.begin(), files.end());

  const bool test_split = options.split == "test";
  fs::create_directories(out_dir);

  Manifest manifest;
  manifest.dir = out_dir;

  auto emit = [&](const Image& clean, const std::string& source_path, const std::string& id,
                  int pin_watermark) {
    SeedSpec sample_seed = SeedSpec(seed.global_seed, "sample/" + id);
    SamplePair pair =
        make_sample(clean, assets, options.ranges, sample_seed, options.pairing, pin_watermark);

    fs::path dir = fs::path(out_dir) / id;
    fs::create_directories(dir);
    save_image_ranged(pair.x_wn, (dir / "x_wn.png").string());
    save_image_ranged(pair.x_w, (dir / "x_w.png").string());
    save_image_ranged(pair.y_w, (dir / "y_w.png").string());
    if (options.emit_views)
      save_image(clamp01(pair.x_wn), (dir / "x_wn_view.png").string(), BitDepth::u8);

    ManifestEntry e;
    e.id = id;
    e.split = options.split;
    e.source = source_path;
    e.x_wn = id + "/x_wn.png";
    e.x_w = id + "/x_w.png";
    e.y_w = id + "/y_w.png";
    if (test_split) {
      save_image_ranged(pair.y_clean, (dir / "y_clean.png").string());
      e.y_clean = id + "/y_clean.png";
    }
    e.spec = pair.spec;
    e.extra_spec = pair.extra_spec;
    e.seed = seed.global_seed;
    manifest.entries.push_back(std::move(e));
  };

  for (const auto& file : files) {
    Image clean = load_image_tagged(file.string(), "source");
    clean.id = file.stem().string();
    if (test_split) {
      for (size_t wi = 0; wi < assets.size(); ++wi) {
        std::ostringstream id;
        id << clean.id << "_w" << (wi < 10 ? "0" : "") << wi;
        emit(clean, file.string(), id.str(), static_cast<int>(wi));
      }
    } else {
      for (int v = 0; v < options.variants_per_image; ++v) {
        std::ostringstream id;
        id << clean.id << "_v" << v;
        emit(clean, file.string(), id.str(), -1);
      }
    }
  }

  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  manifest.save((fs::path(out_dir) / "manifest.jsonl").string());
  return manifest;
}

}  // namespace sshnet::synth
