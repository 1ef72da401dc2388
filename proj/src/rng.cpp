#include "sshnet/rng.hpp"

#include <cmath>

namespace sshnet {

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

SeedSpec SeedSpec::fork(std::string_view suffix) const {
  SeedSpec out;
  out.global_seed = global_seed;
  out.stream_id = stream_id.empty() ? std::string(suffix) : stream_id + "/" + std::string(suffix);
  return out;
}

SeedSpec SeedSpec::fork(std::string_view suffix, uint64_t index) const {
  return fork(std::string(suffix) + ":" + std::to_string(index));
}

namespace {
inline uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

Rng::Rng(const SeedSpec& spec) : Rng(spec.global_seed, spec.stream_id) {}

Rng::Rng(uint64_t global_seed, std::string_view stream_id) {
  uint64_t s = global_seed;
  uint64_t a = splitmix64(s);
  uint64_t key = fnv1a64(stream_id);
  state_ = a ^ (key + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  // Warm up so nearby keys decorrelate.
  splitmix64(state_);
  splitmix64(state_);
}

uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  // 53 random bits -> [0,1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  // Modulo bias is < 2^-50 for the span sizes used here.
  return lo + static_cast<int64_t>(next_u64() % span);
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

}  // namespace sshnet
