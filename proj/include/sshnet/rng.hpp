#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sshnet {

// Keyed random stream. Identical (global_seed, stream_id) pairs produce
// bit-identical streams on every platform, independent of how many other
// streams exist or in what order they are drawn.
struct SeedSpec {
  uint64_t global_seed = 0;
  std::string stream_id;

  SeedSpec() = default;
  SeedSpec(uint64_t seed, std::string stream) : global_seed(seed), stream_id(std::move(stream)) {}

  // Derives a sub-stream, e.g. spec.fork("noise") or spec.fork("epoch", 3).
  SeedSpec fork(std::string_view suffix) const;
  SeedSpec fork(std::string_view suffix, uint64_t index) const;
};

uint64_t fnv1a64(std::string_view s);
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull);

class Rng {
 public:
  explicit Rng(const SeedSpec& spec);
  Rng(uint64_t global_seed, std::string_view stream_id);

  uint64_t next_u64();
  // Uniform in [0,1).
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive on both ends.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double normal();
  double normal(double mean, double stddev);

 private:
  uint64_t state_;
};

}  // namespace sshnet
