#include "sshnet/losses.hpp"

#include <stdexcept>

namespace sshnet {

using nn::Var;

template <typename T>
std::array<Var<T>, 3> structural_loss(const SshNetOutputs<T>& outs, const Var<T>& x_w,
                                      const Var<T>& y_w) {
  std::array<Var<T>, 3> ls;
  if (outs.y_n.defined()) ls[0] = nn::mean_abs_diff(outs.y_n, x_w);
  if (outs.y_wn.defined()) ls[1] = nn::mean_abs_diff(outs.y_wn, y_w);
  if (outs.y_hat.defined()) ls[2] = nn::mean_abs_diff(outs.y_hat, y_w);
  return ls;
}

namespace {

// Mean L1 distance between tapped feature stacks.
template <typename T>
Var<T> feature_l1(const FeatureExtractor& fx, const Var<T>& a, const Var<T>& b) {
  auto fa = fx.features(a);
  auto fb = fx.features(b);
  Var<T> acc;
  for (size_t i = 0; i < fa.size(); ++i) {
    Var<T> d = nn::mean_abs_diff(fa[i], fb[i]);
    acc = acc.defined() ? nn::add(acc, d) : d;
  }
  if (fa.size() > 1) acc = nn::scale(acc, 1.0 / static_cast<double>(fa.size()));
  return acc;
}

}  // namespace

template <typename T>
std::array<Var<T>, 2> texture_loss(const SshNetOutputs<T>& outs, const Var<T>& y_w,
                                   const FeatureExtractor& fx) {
  std::array<Var<T>, 2> lt;
  if (outs.y_wn.defined()) lt[0] = feature_l1(fx, outs.y_wn, y_w);
  if (outs.y_hat.defined()) lt[1] = feature_l1(fx, outs.y_hat, y_w);
  return lt;
}

template <typename T>
LossGraph<T> mixed_loss(const SshNetOutputs<T>& outs, const Var<T>& x_w, const Var<T>& y_w,
                        double alpha, const FeatureExtractor* fx, Variant variant) {
  if (alpha != 0.0 && fx == nullptr)
    throw std::invalid_argument("mixed_loss: texture loss requested but no extractor loaded");

  LossGraph<T> g;
  g.values.alpha = alpha;

  Var<T> structural;
  auto add_term = [](Var<T>& acc, const Var<T>& term) {
    acc = acc.defined() ? nn::add(acc, term) : term;
  };

  if (variant == Variant::se_nrd_only) {
    // Single-decoder ablations train their lone output against the
    // re-watermarked reference.
    Var<T> l = nn::mean_abs_diff(outs.y_n, y_w);
    g.values.l_s2 = static_cast<double>(l.val().v[0]);
    add_term(structural, l);
    if (alpha != 0.0) {
      Var<T> t = feature_l1(*fx, outs.y_n, y_w);
      g.values.l_t1 = static_cast<double>(t.val().v[0]);
      g.total = nn::add(structural, nn::scale(t, alpha));
    } else {
      g.total = structural;
    }
  } else if (variant == Variant::se_wnrd_only) {
    Var<T> l = nn::mean_abs_diff(outs.y_wn, y_w);
    g.values.l_s2 = static_cast<double>(l.val().v[0]);
    add_term(structural, l);
    if (alpha != 0.0) {
      Var<T> t = feature_l1(*fx, outs.y_wn, y_w);
      g.values.l_t1 = static_cast<double>(t.val().v[0]);
      g.total = nn::add(structural, nn::scale(t, alpha));
    } else {
      g.total = structural;
    }
  } else {
    auto ls = structural_loss(outs, x_w, y_w);
    if (ls[0].defined()) {
      g.values.l_s1 = static_cast<double>(ls[0].val().v[0]);
      add_term(structural, ls[0]);
    }
    if (ls[1].defined()) {
      g.values.l_s2 = static_cast<double>(ls[1].val().v[0]);
      add_term(structural, ls[1]);
    }
    if (ls[2].defined()) {
      g.values.l_s3 = static_cast<double>(ls[2].val().v[0]);
      add_term(structural, ls[2]);
    }
    if (alpha != 0.0) {
      auto lt = texture_loss(outs, y_w, *fx);
      Var<T> texture;
      if (lt[0].defined()) {
        g.values.l_t1 = static_cast<double>(lt[0].val().v[0]);
        add_term(texture, lt[0]);
      }
      if (lt[1].defined()) {
        g.values.l_t2 = static_cast<double>(lt[1].val().v[0]);
        add_term(texture, lt[1]);
      }
      g.total = texture.defined() ? nn::add(structural, nn::scale(texture, alpha)) : structural;
    } else {
      g.total = structural;
    }
  }

  g.values.total = static_cast<double>(g.total.val().v[0]);
  return g;
}

#define SSHNET_INSTANTIATE_LOSSES(T)                                                      \
  template std::array<nn::Var<T>, 3> structural_loss<T>(const SshNetOutputs<T>&,          \
                                                        const nn::Var<T>&,               \
                                                        const nn::Var<T>&);              \
  template std::array<nn::Var<T>, 2> texture_loss<T>(const SshNetOutputs<T>&,            \
                                                     const nn::Var<T>&,                  \
                                                     const FeatureExtractor&);           \
  template LossGraph<T> mixed_loss<T>(const SshNetOutputs<T>&, const nn::Var<T>&,        \
                                      const nn::Var<T>&, double, const FeatureExtractor*, \
                                      Variant);

SSHNET_INSTANTIATE_LOSSES(float)
SSHNET_INSTANTIATE_LOSSES(double)
#undef SSHNET_INSTANTIATE_LOSSES

}  // namespace sshnet
