#pragma once

#include <array>
#include <string>
#include <vector>

namespace sshnet {

enum class Variant {
  full,          // SE + NRD + WNRD + FFU, three outputs
  se_nrd_only,   // ablation (a): SE + NRD, single output
  se_wnrd_only,  // ablation (b): SE + WNRD, single output
  dual_no_ffu,   // ablation (c): both decoders, no fusion
  dense_mdta,    // SSA replaced by dense transposed attention (all rates 1)
  dual_encoders  // per-decoder encoders instead of the shared one
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class PairingMode {
  literal,     // y_w = extra watermark composited onto x_w (the stated protocol)
  independent  // y_w = independently re-watermarked clean image
};

std::string to_string(PairingMode m);
PairingMode pairing_mode_from_string(const std::string& s);

struct ModelConfig {
  int base_width = 48;
  // Block counts (L1..L5). L1/L2 drive the two conv scales of the encoder and
  // both decoders; L3/L4/L5 drive the transformer U-Net at /4, /8, /16.
  std::array<int, 5> level_depths{2, 4, 4, 6, 6};
  // Attention heads across the five transformer stages (enc, enc, mid, dec, dec).
  std::array<int, 5> st_heads{4, 8, 8, 8, 4};
  std::vector<double> topk_rates{0.5, 2.0 / 3.0, 0.75, 0.8};
  double ffn_expansion = 2.66;
  int nrd_bottleneck_depth = 2;
  Variant variant = Variant::full;
  PairingMode pairing_mode = PairingMode::literal;
  // Debug path: prune to literal zeros inside the softmax instead of -inf.
  bool literal_zero_prune = false;
  // Selection convention for the top-k operator. Default: each output channel
  // keeps its strongest input channels. The alternative reading selects over
  // the transposed map, which is equivalent to swapping Q and K.
  bool topk_select_input_columns = false;

  // Effective rates: dense_mdta forces every branch to 1.
  std::vector<double> effective_rates() const;
  // Channel widths of the five transformer stages.
  std::array<int, 5> st_widths() const;

  std::vector<std::string> validate() const;  // empty when valid
  void validate_or_throw() const;
};

}  // namespace sshnet
