#pragma once

#include <cstdint>
#include <vector>

#include "sshnet/nn/autodiff.hpp"

namespace sshnet::nn {

// ---- elementwise / arithmetic -------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, double s);

template <typename T>
Var<T> clamp01(const Var<T>& x);  // gradient passes only strictly inside (0,1)

// y[n,c,i] = x[n,c,i] * scale[c] + bias[c] with fixed (non-learnable) constants.
template <typename T>
Var<T> channel_affine(const Var<T>& x, const std::vector<double>& scale,
                      const std::vector<double>& bias);

template <typename T>
Var<T> gelu(const Var<T>& x);  // exact erf form
template <typename T>
Var<T> sigmoid(const Var<T>& x);
template <typename T>
Var<T> relu(const Var<T>& x);

// ---- convolution ---------------------------------------------------------

// x [N,Cin,H,W], w [Cout,Cin/groups,kh,kw], b [Cout] (undefined Var = no bias).
// Zero padding, square stride. Output [N,Cout,OH,OW].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride = 1, int pad = 0,
              int groups = 1);

// ---- normalization / gating ----------------------------------------------

// Per spatial location, normalize across channels (eps 1e-6), then affine.
template <typename T>
Var<T> layer_norm_chan(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta);

// Split channels in half, elementwise product. Channels must be even.
template <typename T>
Var<T> simple_gate(const Var<T>& x);

template <typename T>
Var<T> global_avg_pool(const Var<T>& x);  // -> [N,C,1,1]

// y = x * g with g [N,C,1,1] broadcast over space.
template <typename T>
Var<T> mul_bcast_c(const Var<T>& x, const Var<T>& g);

// ---- reshaping -----------------------------------------------------------

template <typename T>
Var<T> pixel_shuffle2(const Var<T>& x);  // [N,4C,H,W] -> [N,C,2H,2W]

template <typename T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> slice_c(const Var<T>& x, int start, int count);

template <typename T>
Var<T> maxpool2(const Var<T>& x);  // 2x2 window, stride 2

// ---- losses ----------------------------------------------------------------

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);  // scalar

// ---- sparse transposed attention ------------------------------------------

// Stable top-k over one attention row: entries strictly above the k-th value
// are kept; ties on the threshold are kept lowest-index-first.
template <typename T>
void topk_mask_row(const T* row, int d, int k, uint8_t* mask);

// Transposed (channel) attention with multi-rate top-k sparsity, Q/K rows
// L2-normalized over the spatial axis. q,k,v: [N,C,H,W]; lambda: per-head
// scale {heads}; rates: kept fraction per branch, k_i = ceil(rate*d_head).
// Branches share one attention map; outputs are averaged. With all rates == 1
// this is exactly dense transposed attention (MDTA).
// literal_zero_prune keeps the pruned entries at 0 *inside* the softmax
// (debug path mirroring the formula text rather than its intent).
// If masks_out is non-null it receives [branch][n*heads + h] masks of d*d bytes.
template <typename T>
Var<T> ssa_core(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads,
                const Var<T>& lambda, const std::vector<double>& rates,
                bool literal_zero_prune = false,
                std::vector<std::vector<std::vector<uint8_t>>>* masks_out = nullptr);

// ---- plain tensor utilities (no autodiff) ----------------------------------

template <typename T>
Tensor<T> reflect_pad2(const Tensor<T>& x, int top, int bottom, int left, int right);
template <typename T>
Tensor<T> crop2(const Tensor<T>& x, int top, int left, int out_h, int out_w);

#define SSHNET_EXTERN_OPS(T)                                                                  \
  extern template Var<T> add<T>(const Var<T>&, const Var<T>&);                               \
  extern template Var<T> sub<T>(const Var<T>&, const Var<T>&);                               \
  extern template Var<T> mul<T>(const Var<T>&, const Var<T>&);                               \
  extern template Var<T> scale<T>(const Var<T>&, double);                                    \
  extern template Var<T> clamp01<T>(const Var<T>&);                                          \
  extern template Var<T> channel_affine<T>(const Var<T>&, const std::vector<double>&,        \
                                           const std::vector<double>&);                      \
  extern template Var<T> gelu<T>(const Var<T>&);                                             \
  extern template Var<T> sigmoid<T>(const Var<T>&);                                          \
  extern template Var<T> relu<T>(const Var<T>&);                                             \
  extern template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int,    \
                                   int);                                                     \
  extern template Var<T> layer_norm_chan<T>(const Var<T>&, const Var<T>&, const Var<T>&);    \
  extern template Var<T> simple_gate<T>(const Var<T>&);                                      \
  extern template Var<T> global_avg_pool<T>(const Var<T>&);                                  \
  extern template Var<T> mul_bcast_c<T>(const Var<T>&, const Var<T>&);                       \
  extern template Var<T> pixel_shuffle2<T>(const Var<T>&);                                   \
  extern template Var<T> concat_c<T>(const Var<T>&, const Var<T>&);                          \
  extern template Var<T> slice_c<T>(const Var<T>&, int, int);                                \
  extern template Var<T> maxpool2<T>(const Var<T>&);                                         \
  extern template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                     \
  extern template void topk_mask_row<T>(const T*, int, int, uint8_t*);                       \
  extern template Var<T> ssa_core<T>(const Var<T>&, const Var<T>&, const Var<T>&, int,       \
                                     const Var<T>&, const std::vector<double>&, bool,        \
                                     std::vector<std::vector<std::vector<uint8_t>>>*);       \
  extern template Tensor<T> reflect_pad2<T>(const Tensor<T>&, int, int, int, int);           \
  extern template Tensor<T> crop2<T>(const Tensor<T>&, int, int, int, int);

SSHNET_EXTERN_OPS(float)
SSHNET_EXTERN_OPS(double)
#undef SSHNET_EXTERN_OPS

}  // namespace sshnet::nn
