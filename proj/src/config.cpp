#include "sshnet/config.hpp"

#include <stdexcept>

namespace sshnet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::se_nrd_only: return "se_nrd_only";
    case Variant::se_wnrd_only: return "se_wnrd_only";
    case Variant::dual_no_ffu: return "dual_no_ffu";
    case Variant::dense_mdta: return "dense_mdta";
    case Variant::dual_encoders: return "dual_encoders";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "se_nrd_only") return Variant::se_nrd_only;
  if (s == "se_wnrd_only") return Variant::se_wnrd_only;
  if (s == "dual_no_ffu") return Variant::dual_no_ffu;
  if (s == "dense_mdta") return Variant::dense_mdta;
  if (s == "dual_encoders") return Variant::dual_encoders;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(PairingMode m) {
  return m == PairingMode::literal ? "literal" : "independent";
}

PairingMode pairing_mode_from_string(const std::string& s) {
  if (s == "literal") return PairingMode::literal;
  if (s == "independent") return PairingMode::independent;
  throw std::invalid_argument("unknown pairing mode: " + s);
}

std::vector<double> ModelConfig::effective_rates() const {
  if (variant == Variant::dense_mdta) return std::vector<double>(topk_rates.size(), 1.0);
  return topk_rates;
}

std::array<int, 5> ModelConfig::st_widths() const {
  int c = base_width;
  return {c, 2 * c, 4 * c, 2 * c, c};
}

std::vector<std::string> ModelConfig::validate() const {
  std::vector<std::string> errs;
  if (base_width < 2 || base_width % 2 != 0)
    errs.push_back("base_width must be an even integer >= 2, got " +
                   std::to_string(base_width));
  for (size_t i = 0; i < level_depths.size(); ++i)
    if (level_depths[i] < 1)
      errs.push_back("level_depths[" + std::to_string(i) + "] must be >= 1");
  if (nrd_bottleneck_depth < 1) errs.push_back("nrd_bottleneck_depth must be >= 1");
  auto widths = st_widths();
  for (size_t i = 0; i < st_heads.size(); ++i) {
    if (st_heads[i] < 1) {
      errs.push_back("st_heads[" + std::to_string(i) + "] must be >= 1");
    } else if (base_width >= 2 && widths[i] % st_heads[i] != 0) {
      errs.push_back("st_heads[" + std::to_string(i) + "]=" + std::to_string(st_heads[i]) +
                     " does not divide stage width " + std::to_string(widths[i]));
    }
  }
  if (topk_rates.empty()) errs.push_back("topk_rates must contain at least one rate");
  for (double r : topk_rates)
    if (r <= 0.0 || r > 1.0) errs.push_back("top-k rates must lie in (0,1]");
  if (ffn_expansion <= 0.0) errs.push_back("ffn_expansion must be positive");
  return errs;
}

void ModelConfig::validate_or_throw() const {
  auto errs = validate();
  if (errs.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw std::invalid_argument(msg);
}

}  // namespace sshnet
