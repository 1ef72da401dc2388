#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sshnet/config.hpp"
#include "sshnet/image.hpp"
#include "sshnet/rng.hpp"

namespace sshnet::synth {

// One watermark placement plus the paired noise level.
struct CorruptionSpec {
  double transparency = 0.3;  // global opacity multiplier on the asset matte
  double scale = 1.0;         // applied to the asset's native size
  double coverage = 0.0;      // realized footprint area / image area
  int row = 0, col = 0;       // top-left placement
  int watermark_index = 0;
  std::string watermark_name;
  double noise_sigma = 0.0;  // std on the 0..255 intensity scale
};

// Either a discrete choice set or a continuous uniform range.
struct DrawRange {
  std::vector<double> choices;  // used when not uniform
  double lo = 0.0, hi = 0.0;
  bool uniform = false;

  static DrawRange discrete(std::vector<double> values);
  static DrawRange range(double lo, double hi);
  // "0.3,0.5,0.7" -> discrete; "0.3:1.0" -> uniform.
  static DrawRange parse(const std::string& text);
  double draw(Rng& rng) const;
  std::string describe() const;
};

struct CorruptionRanges {
  DrawRange transparency = DrawRange::discrete({0.3, 0.5, 0.7, 1.0});
  DrawRange noise_sigma = DrawRange::discrete({0.0, 15.0, 25.0, 50.0});
  double scale_lo = 0.5, scale_hi = 1.0;
  double coverage_max = 0.4;
  int max_placement_retries = 64;
};

// The self-supervised training tuple. y_clean is carried for evaluation only
// and is never consumed by any loss.
struct SamplePair {
  Image x_wn;     // network input: watermarked + noisy
  Image x_w;      // noise-free watermarked target (L_s1)
  Image y_w;      // re-watermarked reference target (L_s2/L_s3/L_t)
  Image y_clean;  // held-out ground truth, evaluation only
  CorruptionSpec spec;
  CorruptionSpec extra_spec;
};

// out(p) = a(p) * W(p) + (1 - a(p)) * base(p), with a(p) = transparency times
// the scaled asset matte. Pixels outside the footprint are bit-identical to
// the base; the result is clamped to [0,1].
Image composite_watermark(const Image& base, const WatermarkAsset& asset,
                          const CorruptionSpec& spec);

// Adds i.i.d. zero-mean Gaussian noise with std sigma_255/255. The output is
// deliberately not clamped so the additive model stays exact.
Image add_gaussian_noise(const Image& img, double sigma_255, const SeedSpec& seed);

// Draws a placement within the ranges; throws after bounded retries when no
// valid placement exists. pin_watermark >= 0 fixes the asset index.
CorruptionSpec draw_spec(const Image& base, const std::vector<WatermarkAsset>& assets,
                         const CorruptionRanges& ranges, Rng& rng, int pin_watermark = -1);

SamplePair make_sample(const Image& y_clean, const std::vector<WatermarkAsset>& assets,
                       const CorruptionRanges& ranges, const SeedSpec& seed,
                       PairingMode mode = PairingMode::literal, int pin_watermark = -1);

// The twelve built-in RGBA watermark templates: six text marks at two
// weights, three geometric logos, three mixed text+logo marks.
std::vector<WatermarkAsset> make_default_assets();

// Procedural multi-octave test scene, values inside (0,1).
Image make_synthetic_scene(int h, int w, const SeedSpec& seed);

// ---- corpus ------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string source;  // original clean image path (for per-epoch resynthesis)
  std::string x_wn, x_w, y_w, y_clean;  // paths relative to the manifest
  CorruptionSpec spec, extra_spec;
  uint64_t seed = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string dir;  // directory the relative paths resolve against

  static Manifest load(const std::string& manifest_path);
  void save(const std::string& manifest_path) const;
  std::string resolve(const std::string& rel) const;
};

struct CorpusOptions {
  std::string split = "test";     // "test": one sample per (image, asset);
                                  // "train": variants_per_image random draws
  int variants_per_image = 1;
  PairingMode pairing = PairingMode::literal;
  bool emit_views = true;  // 8-bit clamped x_wn copies for inspection
  CorruptionRanges ranges;
};

// Builds the corpus under out_dir and writes out_dir/manifest.jsonl.
// y_clean PNGs are emitted only for the test split.
Manifest build_corpus(const std::string& image_dir, const std::vector<WatermarkAsset>& assets,
                      const CorpusOptions& options, const std::string& out_dir,
                      const SeedSpec& seed);

}  // namespace sshnet::synth
