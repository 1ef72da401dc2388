#pragma once

#include "sshnet/config.hpp"
#include "sshnet/extractor.hpp"
#include "sshnet/model.hpp"

namespace sshnet {

// Per-step loss record; unused branch terms stay at zero.
struct LossBreakdown {
  double l_s1 = 0, l_s2 = 0, l_s3 = 0;
  double l_t1 = 0, l_t2 = 0;
  double total = 0;
  double alpha = 0.024;
};

template <typename T>
struct LossGraph {
  nn::Var<T> total;  // scalar node to backpropagate
  LossBreakdown values;
};

// L_s1 = mean|Y_n - X_w|, L_s2 = mean|Y_wn - Y_w|, L_s3 = mean|Yhat - Y_w|.
template <typename T>
std::array<nn::Var<T>, 3> structural_loss(const SshNetOutputs<T>& outs, const nn::Var<T>& x_w,
                                          const nn::Var<T>& y_w);

// L_t1 = mean|fx(Y_wn) - fx(Y_w)|, L_t2 = mean|fx(Yhat) - fx(Y_w)| over taps.
template <typename T>
std::array<nn::Var<T>, 2> texture_loss(const SshNetOutputs<T>& outs, const nn::Var<T>& y_w,
                                       const FeatureExtractor& fx);

// L = L_s + alpha * L_t, with the terms present for the given variant. The
// clean ground truth never enters this function's signature; the
// self-supervision contract is enforced by construction.
template <typename T>
LossGraph<T> mixed_loss(const SshNetOutputs<T>& outs, const nn::Var<T>& x_w,
                        const nn::Var<T>& y_w, double alpha, const FeatureExtractor* fx,
                        Variant variant = Variant::full);

#define SSHNET_EXTERN_LOSSES(T)                                                           \
  extern template std::array<nn::Var<T>, 3> structural_loss<T>(                           \
      const SshNetOutputs<T>&, const nn::Var<T>&, const nn::Var<T>&);                     \
  extern template std::array<nn::Var<T>, 2> texture_loss<T>(                              \
      const SshNetOutputs<T>&, const nn::Var<T>&, const FeatureExtractor&);               \
  extern template LossGraph<T> mixed_loss<T>(const SshNetOutputs<T>&, const nn::Var<T>&,  \
                                             const nn::Var<T>&, double,                   \
                                             const FeatureExtractor*, Variant);

SSHNET_EXTERN_LOSSES(float)
SSHNET_EXTERN_LOSSES(double)
#undef SSHNET_EXTERN_LOSSES

}  // namespace sshnet
