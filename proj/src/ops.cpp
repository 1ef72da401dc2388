#include "sshnet/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "sshnet/nn/gemm.hpp"

namespace sshnet::nn {

namespace {

template <typename T>
Var<T> make_result(Tensor<T> val, std::initializer_list<Var<T>> inputs) {
  Var<T> out(std::move(val));
  bool rg = false;
  if (GradMode::enabled())
    for (const auto& i : inputs) rg = rg || i.requires_grad();
  out.node_->requires_grad = rg;
  if (rg)
    for (const auto& i : inputs)
      if (i.defined()) out.node_->parents.push_back(i.node_);
  return out;
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.val().shape != b.val().shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.val().shape_str() +
                                " vs " + b.val().shape_str());
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> y(a.val().shape);
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y.v[i] = a.val().v[i] + b.val().v[i];
  Var<T> out = make_result(std::move(y), {a, b});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* an = a.node_.get();
    Node<T>* bn = b.node_.get();
    out.node_->backward_fn = [on, an, bn, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i) an->grad.v[i] += on->grad.v[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) bn->grad.v[i] += on->grad.v[i];
      }
    };
  }
  return out;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> y(a.val().shape);
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y.v[i] = a.val().v[i] - b.val().v[i];
  Var<T> out = make_result(std::move(y), {a, b});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* an = a.node_.get();
    Node<T>* bn = b.node_.get();
    out.node_->backward_fn = [on, an, bn, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i) an->grad.v[i] += on->grad.v[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) bn->grad.v[i] -= on->grad.v[i];
      }
    };
  }
  return out;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> y(a.val().shape);
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y.v[i] = a.val().v[i] * b.val().v[i];
  Var<T> out = make_result(std::move(y), {a, b});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* an = a.node_.get();
    Node<T>* bn = b.node_.get();
    out.node_->backward_fn = [on, an, bn, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i) an->grad.v[i] += on->grad.v[i] * bn->val.v[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) bn->grad.v[i] += on->grad.v[i] * an->val.v[i];
      }
    };
  }
  return out;
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  Tensor<T> y(a.val().shape);
  const int64_t n = y.numel();
  const T ts = static_cast<T>(s);
  for (int64_t i = 0; i < n; ++i) y.v[i] = a.val().v[i] * ts;
  Var<T> out = make_result(std::move(y), {a});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* an = a.node_.get();
    out.node_->backward_fn = [on, an, n, ts] {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i) an->grad.v[i] += on->grad.v[i] * ts;
    };
  }
  return out;
}

template <typename T>
Var<T> clamp01(const Var<T>& x) {
  Tensor<T> y(x.val().shape);
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y.v[i] = std::min(std::max(x.val().v[i], T(0)), T(1));
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n] {
      xn->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        T v = xn->val.v[i];
        if (v > T(0) && v < T(1)) xn->grad.v[i] += on->grad.v[i];
      }
    };
  }
  return out;
}

template <typename T>
Var<T> channel_affine(const Var<T>& x, const std::vector<double>& scale,
                      const std::vector<double>& bias) {
  if (x.val().ndim() != 4 || scale.size() != static_cast<size_t>(x.val().c()) ||
      bias.size() != scale.size())
    throw std::invalid_argument("channel_affine: constants must match channel count");
  const int n = x.val().n(), c = x.val().c();
  const int64_t plane = x.val().plane();
  Tensor<T> y(x.val().shape);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      T* yc = y.chan(in, ic);
      T s = static_cast<T>(scale[ic]), bs = static_cast<T>(bias[ic]);
      for (int64_t i = 0; i < plane; ++i) yc[i] = xc[i] * s + bs;
    }
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    auto sc = scale;
    out.node_->backward_fn = [on, xn, sc, n, c, plane] {
      xn->ensure_grad();
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
          const T* gy = on->grad.chan(in, ic);
          T* gx = xn->grad.chan(in, ic);
          T s = static_cast<T>(sc[ic]);
          for (int64_t i = 0; i < plane; ++i) gx[i] += gy[i] * s;
        }
    };
  }
  return out;
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> y(x.val().shape);
  const int64_t n = y.numel();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (int64_t i = 0; i < n; ++i) {
    double v = static_cast<double>(x.val().v[i]);
    y.v[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)));
  }
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n] {
      xn->ensure_grad();
      constexpr double is2 = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      for (int64_t i = 0; i < n; ++i) {
        double v = static_cast<double>(xn->val.v[i]);
        double cdf = 0.5 * (1.0 + std::erf(v * is2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        xn->grad.v[i] += on->grad.v[i] * static_cast<T>(cdf + v * pdf);
      }
    };
  }
  return out;
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> y(x.val().shape);
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i)
    y.v[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.val().v[i]))));
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n] {
      xn->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        T s = on->val.v[i];
        xn->grad.v[i] += on->grad.v[i] * s * (T(1) - s);
      }
    };
  }
  return out;
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y(x.val().shape);
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) y.v[i] = x.val().v[i] > T(0) ? x.val().v[i] : T(0);
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n] {
      xn->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        if (xn->val.v[i] > T(0)) xn->grad.v[i] += on->grad.v[i];
    };
  }
  return out;
}

// ---- convolution -----------------------------------------------------------

namespace {

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, stride, pad, groups, oh, ow, cinpg, coutpg;
};

template <typename T>
ConvDims conv_dims(const Var<T>& x, const Var<T>& w, int stride, int pad, int groups) {
  if (x.val().ndim() != 4 || w.val().ndim() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and weight");
  ConvDims d;
  d.n = x.val().shape[0];
  d.cin = x.val().shape[1];
  d.h = x.val().shape[2];
  d.w = x.val().shape[3];
  d.cout = w.val().shape[0];
  d.kh = w.val().shape[2];
  d.kw = w.val().shape[3];
  d.stride = stride;
  d.pad = pad;
  d.groups = groups;
  if (groups < 1 || d.cin % groups != 0 || d.cout % groups != 0)
    throw std::invalid_argument("conv2d: bad group count");
  d.cinpg = d.cin / groups;
  d.coutpg = d.cout / groups;
  if (w.val().shape[1] != d.cinpg)
    throw std::invalid_argument("conv2d: weight channels " + w.val().shape_str() +
                                " do not match input " + x.val().shape_str());
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh < 1 || d.ow < 1) throw std::invalid_argument("conv2d: output would be empty");
  return d;
}

// col is [cinpg*kh*kw, oh*ow] for one (sample, group).
template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
  const int64_t ohow = static_cast<int64_t>(d.oh) * d.ow;
  for (int c = 0; c < d.cinpg; ++c) {
    const T* xc = x + static_cast<int64_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        T* row = col + (static_cast<int64_t>(c) * d.kh * d.kw + ki * d.kw + kj) * ohow;
        for (int oy = 0; oy < d.oh; ++oy) {
          int iy = oy * d.stride - d.pad + ki;
          T* dst = row + static_cast<int64_t>(oy) * d.ow;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.ow, T(0));
            continue;
          }
          const T* src = xc + static_cast<int64_t>(iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            int ix = ox * d.stride - d.pad + kj;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* dx) {
  const int64_t ohow = static_cast<int64_t>(d.oh) * d.ow;
  for (int c = 0; c < d.cinpg; ++c) {
    T* xc = dx + static_cast<int64_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const T* row = col + (static_cast<int64_t>(c) * d.kh * d.kw + ki * d.kw + kj) * ohow;
        for (int oy = 0; oy < d.oh; ++oy) {
          int iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          const T* src = row + static_cast<int64_t>(oy) * d.ow;
          T* dst = xc + static_cast<int64_t>(iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            int ix = ox * d.stride - d.pad + kj;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
bool is_depthwise(const ConvDims& d) {
  return d.groups == d.cin && d.cinpg == 1 && d.coutpg == 1;
}

template <typename T>
bool is_pointwise(const ConvDims& d) {
  return d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0 && d.groups == 1;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad,
              int groups) {
  ConvDims d = conv_dims(x, w, stride, pad, groups);
  if (b.defined() && b.val().numel() != d.cout)
    throw std::invalid_argument("conv2d: bias size mismatch");

  Tensor<T> y({d.n, d.cout, d.oh, d.ow});
  const int64_t ohow = static_cast<int64_t>(d.oh) * d.ow;
  const int64_t hw = static_cast<int64_t>(d.h) * d.w;
  const int kk = d.kh * d.kw;

  if (is_depthwise<T>(d)) {
    for (int in = 0; in < d.n; ++in) {
      for (int c = 0; c < d.cin; ++c) {
        const T* xc = x.val().chan(in, c);
        const T* wc = w.val().data() + static_cast<int64_t>(c) * kk;
        T* yc = y.chan(in, c);
        T bias = b.defined() ? b.val().v[c] : T(0);
        for (int oy = 0; oy < d.oh; ++oy) {
          for (int ox = 0; ox < d.ow; ++ox) {
            T acc = bias;
            for (int ki = 0; ki < d.kh; ++ki) {
              int iy = oy * d.stride - d.pad + ki;
              if (iy < 0 || iy >= d.h) continue;
              for (int kj = 0; kj < d.kw; ++kj) {
                int ix = ox * d.stride - d.pad + kj;
                if (ix < 0 || ix >= d.w) continue;
                acc += wc[ki * d.kw + kj] * xc[iy * static_cast<int64_t>(d.w) + ix];
              }
            }
            yc[oy * static_cast<int64_t>(d.ow) + ox] = acc;
          }
        }
      }
    }
  } else if (is_pointwise<T>(d)) {
    for (int in = 0; in < d.n; ++in) {
      gemm<T>(false, false, d.cout, static_cast<int>(hw), d.cin, T(1), w.val().data(), d.cin,
              x.val().chan(in, 0), static_cast<int>(hw), T(0), y.chan(in, 0),
              static_cast<int>(hw));
    }
    if (b.defined())
      for (int in = 0; in < d.n; ++in)
        for (int c = 0; c < d.cout; ++c) {
          T* yc = y.chan(in, c);
          T bias = b.val().v[c];
          for (int64_t i = 0; i < hw; ++i) yc[i] += bias;
        }
  } else {
    std::vector<T> col(static_cast<size_t>(d.cinpg) * kk * ohow);
    for (int in = 0; in < d.n; ++in) {
      for (int g = 0; g < d.groups; ++g) {
        im2col(x.val().chan(in, g * d.cinpg), d, col.data());
        gemm<T>(false, false, d.coutpg, static_cast<int>(ohow), d.cinpg * kk, T(1),
                w.val().data() + static_cast<int64_t>(g) * d.coutpg * d.cinpg * kk, d.cinpg * kk,
                col.data(), static_cast<int>(ohow), T(0), y.chan(in, g * d.coutpg),
                static_cast<int>(ohow));
      }
    }
    if (b.defined())
      for (int in = 0; in < d.n; ++in)
        for (int c = 0; c < d.cout; ++c) {
          T* yc = y.chan(in, c);
          T bias = b.val().v[c];
          for (int64_t i = 0; i < ohow; ++i) yc[i] += bias;
        }
  }

  Var<T> out = b.defined() ? make_result(std::move(y), {x, w, b})
                           : make_result(std::move(y), {x, w});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    Node<T>* wn = w.node_.get();
    Node<T>* bn = b.defined() ? b.node_.get() : nullptr;
    out.node_->backward_fn = [on, xn, wn, bn, d, ohow, hw, kk] {
      // bias
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (int in = 0; in < d.n; ++in)
          for (int c = 0; c < d.cout; ++c) {
            const T* gy = on->grad.chan(in, c);
            T acc = T(0);
            for (int64_t i = 0; i < ohow; ++i) acc += gy[i];
            bn->grad.v[c] += acc;
          }
      }
      const bool need_dx = xn->requires_grad;
      const bool need_dw = wn->requires_grad;
      if (!need_dx && !need_dw) return;
      if (need_dx) xn->ensure_grad();
      if (need_dw) wn->ensure_grad();

      if (is_depthwise<T>(d)) {
        for (int in = 0; in < d.n; ++in) {
          for (int c = 0; c < d.cin; ++c) {
            const T* gy = on->grad.chan(in, c);
            const T* xc = xn->val.chan(in, c);
            const T* wc = wn->val.data() + static_cast<int64_t>(c) * kk;
            T* gx = need_dx ? xn->grad.chan(in, c) : nullptr;
            T* gw = need_dw ? wn->grad.data() + static_cast<int64_t>(c) * kk : nullptr;
            for (int oy = 0; oy < d.oh; ++oy) {
              for (int ox = 0; ox < d.ow; ++ox) {
                T g = gy[oy * static_cast<int64_t>(d.ow) + ox];
                if (g == T(0)) continue;
                for (int ki = 0; ki < d.kh; ++ki) {
                  int iy = oy * d.stride - d.pad + ki;
                  if (iy < 0 || iy >= d.h) continue;
                  for (int kj = 0; kj < d.kw; ++kj) {
                    int ix = ox * d.stride - d.pad + kj;
                    if (ix < 0 || ix >= d.w) continue;
                    int64_t xi = iy * static_cast<int64_t>(d.w) + ix;
                    if (gx) gx[xi] += g * wc[ki * d.kw + kj];
                    if (gw) gw[ki * d.kw + kj] += g * xc[xi];
                  }
                }
              }
            }
          }
        }
      } else if (is_pointwise<T>(d)) {
        for (int in = 0; in < d.n; ++in) {
          if (need_dx)
            gemm<T>(true, false, d.cin, static_cast<int>(hw), d.cout, T(1), wn->val.data(),
                    d.cin, on->grad.chan(in, 0), static_cast<int>(hw), T(1),
                    xn->grad.chan(in, 0), static_cast<int>(hw));
          if (need_dw)
            gemm<T>(false, true, d.cout, d.cin, static_cast<int>(hw), T(1),
                    on->grad.chan(in, 0), static_cast<int>(hw), xn->val.chan(in, 0),
                    static_cast<int>(hw), T(1), wn->grad.data(), d.cin);
        }
      } else {
        std::vector<T> col(static_cast<size_t>(d.cinpg) * kk * ohow);
        std::vector<T> dcol(need_dx ? col.size() : 0);
        for (int in = 0; in < d.n; ++in) {
          for (int g = 0; g < d.groups; ++g) {
            const T* gy = on->grad.chan(in, g * d.coutpg);
            if (need_dw) {
              im2col(xn->val.chan(in, g * d.cinpg), d, col.data());
              gemm<T>(false, true, d.coutpg, d.cinpg * kk, static_cast<int>(ohow), T(1), gy,
                      static_cast<int>(ohow), col.data(), static_cast<int>(ohow), T(1),
                      wn->grad.data() + static_cast<int64_t>(g) * d.coutpg * d.cinpg * kk,
                      d.cinpg * kk);
            }
            if (need_dx) {
              gemm<T>(true, false, d.cinpg * kk, static_cast<int>(ohow), d.coutpg, T(1),
                      wn->val.data() + static_cast<int64_t>(g) * d.coutpg * d.cinpg * kk,
                      d.cinpg * kk, gy, static_cast<int>(ohow), T(0), dcol.data(),
                      static_cast<int>(ohow));
              col2im_add(dcol.data(), d, xn->grad.chan(in, g * d.cinpg));
            }
          }
        }
      }
    };
  }
  return out;
}

// ---- layer norm -------------------------------------------------------------

template <typename T>
Var<T> layer_norm_chan(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta) {
  if (x.val().ndim() != 4) throw std::invalid_argument("layer_norm_chan: expected 4-d input");
  const int n = x.val().n(), c = x.val().c();
  const int64_t plane = x.val().plane();
  if (gamma.val().numel() != c || beta.val().numel() != c)
    throw std::invalid_argument("layer_norm_chan: affine parameter length != channels");
  constexpr double eps = 1e-6;

  Tensor<T> y(x.val().shape);
  // Saved statistics, one per spatial location.
  auto saved = std::make_shared<std::vector<T>>(static_cast<size_t>(n) * plane * 2);
  T* mu = saved->data();
  T* invstd = saved->data() + static_cast<size_t>(n) * plane;

  std::vector<double> acc(plane);
  for (int in = 0; in < n; ++in) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      for (int64_t i = 0; i < plane; ++i) acc[i] += xc[i];
    }
    T* mu_n = mu + static_cast<int64_t>(in) * plane;
    for (int64_t i = 0; i < plane; ++i) mu_n[i] = static_cast<T>(acc[i] / c);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      for (int64_t i = 0; i < plane; ++i) {
        double dlt = xc[i] - mu_n[i];
        acc[i] += dlt * dlt;
      }
    }
    T* is_n = invstd + static_cast<int64_t>(in) * plane;
    for (int64_t i = 0; i < plane; ++i)
      is_n[i] = static_cast<T>(1.0 / std::sqrt(acc[i] / c + eps));
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      T* yc = y.chan(in, ic);
      T g = gamma.val().v[ic], bta = beta.val().v[ic];
      for (int64_t i = 0; i < plane; ++i) yc[i] = g * (xc[i] - mu_n[i]) * is_n[i] + bta;
    }
  }

  Var<T> out = make_result(std::move(y), {x, gamma, beta});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    Node<T>* gn = gamma.node_.get();
    Node<T>* bn = beta.node_.get();
    out.node_->backward_fn = [on, xn, gn, bn, saved, n, c, plane] {
      const T* mu = saved->data();
      const T* invstd = saved->data() + static_cast<size_t>(n) * plane;
      std::vector<double> s1(plane), s2(plane);
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (int in = 0; in < n; ++in) {
        const T* mu_n = mu + static_cast<int64_t>(in) * plane;
        const T* is_n = invstd + static_cast<int64_t>(in) * plane;
        std::fill(s1.begin(), s1.end(), 0.0);
        std::fill(s2.begin(), s2.end(), 0.0);
        for (int ic = 0; ic < c; ++ic) {
          const T* gy = on->grad.chan(in, ic);
          const T* xc = xn->val.chan(in, ic);
          T g = gn->val.v[ic];
          double dgamma = 0.0, dbeta = 0.0;
          for (int64_t i = 0; i < plane; ++i) {
            double xhat = (xc[i] - mu_n[i]) * is_n[i];
            double gd = static_cast<double>(g) * gy[i];
            s1[i] += gd;
            s2[i] += gd * xhat;
            dgamma += gy[i] * xhat;
            dbeta += gy[i];
          }
          if (gn->requires_grad) gn->grad.v[ic] += static_cast<T>(dgamma);
          if (bn->requires_grad) bn->grad.v[ic] += static_cast<T>(dbeta);
        }
        if (xn->requires_grad) {
          for (int ic = 0; ic < c; ++ic) {
            const T* gy = on->grad.chan(in, ic);
            const T* xc = xn->val.chan(in, ic);
            T* gx = xn->grad.chan(in, ic);
            T g = gn->val.v[ic];
            for (int64_t i = 0; i < plane; ++i) {
              double xhat = (xc[i] - mu_n[i]) * is_n[i];
              double t = static_cast<double>(g) * gy[i] - s1[i] / c - xhat * (s2[i] / c);
              gx[i] += static_cast<T>(t * is_n[i]);
            }
          }
        }
      }
    };
  }
  return out;
}

// ---- gating ------------------------------------------------------------------

template <typename T>
Var<T> simple_gate(const Var<T>& x) {
  if (x.val().ndim() != 4 || x.val().c() % 2 != 0)
    throw std::invalid_argument("simple_gate: channel count must be even");
  const int n = x.val().n(), c2 = x.val().c(), c = c2 / 2;
  const int64_t plane = x.val().plane();
  Tensor<T> y({n, c, x.val().h(), x.val().w()});
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* a = x.val().chan(in, ic);
      const T* b = x.val().chan(in, ic + c);
      T* yc = y.chan(in, ic);
      for (int64_t i = 0; i < plane; ++i) yc[i] = a[i] * b[i];
    }
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n, c, plane] {
      xn->ensure_grad();
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
          const T* gy = on->grad.chan(in, ic);
          const T* a = xn->val.chan(in, ic);
          const T* b = xn->val.chan(in, ic + c);
          T* ga = xn->grad.chan(in, ic);
          T* gb = xn->grad.chan(in, ic + c);
          for (int64_t i = 0; i < plane; ++i) {
            ga[i] += gy[i] * b[i];
            gb[i] += gy[i] * a[i];
          }
        }
    };
  }
  return out;
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  if (x.val().ndim() != 4) throw std::invalid_argument("global_avg_pool: expected 4-d input");
  const int n = x.val().n(), c = x.val().c();
  const int64_t plane = x.val().plane();
  Tensor<T> y({n, c, 1, 1});
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += xc[i];
      y.v[static_cast<int64_t>(in) * c + ic] = static_cast<T>(acc / plane);
    }
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n, c, plane] {
      xn->ensure_grad();
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
          T g = on->grad.v[static_cast<int64_t>(in) * c + ic] / static_cast<T>(plane);
          T* gx = xn->grad.chan(in, ic);
          for (int64_t i = 0; i < plane; ++i) gx[i] += g;
        }
    };
  }
  return out;
}

template <typename T>
Var<T> mul_bcast_c(const Var<T>& x, const Var<T>& g) {
  if (x.val().ndim() != 4 || g.val().ndim() != 4 || g.val().h() != 1 || g.val().w() != 1 ||
      g.val().n() != x.val().n() || g.val().c() != x.val().c())
    throw std::invalid_argument("mul_bcast_c: gain must be [N,C,1,1] matching input");
  const int n = x.val().n(), c = x.val().c();
  const int64_t plane = x.val().plane();
  Tensor<T> y(x.val().shape);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      T* yc = y.chan(in, ic);
      T gv = g.val().v[static_cast<int64_t>(in) * c + ic];
      for (int64_t i = 0; i < plane; ++i) yc[i] = xc[i] * gv;
    }
  Var<T> out = make_result(std::move(y), {x, g});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    Node<T>* gn = g.node_.get();
    out.node_->backward_fn = [on, xn, gn, n, c, plane] {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int in = 0; in < n; ++in)
          for (int ic = 0; ic < c; ++ic) {
            const T* gy = on->grad.chan(in, ic);
            T* gx = xn->grad.chan(in, ic);
            T gv = gn->val.v[static_cast<int64_t>(in) * c + ic];
            for (int64_t i = 0; i < plane; ++i) gx[i] += gy[i] * gv;
          }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int in = 0; in < n; ++in)
          for (int ic = 0; ic < c; ++ic) {
            const T* gy = on->grad.chan(in, ic);
            const T* xc = xn->val.chan(in, ic);
            double acc = 0.0;
            for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(gy[i]) * xc[i];
            gn->grad.v[static_cast<int64_t>(in) * c + ic] += static_cast<T>(acc);
          }
      }
    };
  }
  return out;
}

// ---- reshaping ----------------------------------------------------------------

template <typename T>
Var<T> pixel_shuffle2(const Var<T>& x) {
  if (x.val().ndim() != 4 || x.val().c() % 4 != 0)
    throw std::invalid_argument("pixel_shuffle2: channels must be divisible by 4");
  const int n = x.val().n(), c4 = x.val().c(), c = c4 / 4;
  const int h = x.val().h(), w = x.val().w();
  Tensor<T> y({n, c, 2 * h, 2 * w});
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < c; ++oc) {
      T* yc = y.chan(in, oc);
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const T* xc = x.val().chan(in, oc * 4 + dy * 2 + dx);
          for (int iy = 0; iy < h; ++iy) {
            T* dst = yc + (static_cast<int64_t>(2 * iy + dy) * 2 * w) + dx;
            const T* src = xc + static_cast<int64_t>(iy) * w;
            for (int ix = 0; ix < w; ++ix) dst[2 * ix] = src[ix];
          }
        }
    }
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n, c, h, w] {
      xn->ensure_grad();
      for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < c; ++oc) {
          const T* gy = on->grad.chan(in, oc);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              T* gx = xn->grad.chan(in, oc * 4 + dy * 2 + dx);
              for (int iy = 0; iy < h; ++iy) {
                const T* src = gy + (static_cast<int64_t>(2 * iy + dy) * 2 * w) + dx;
                T* dst = gx + static_cast<int64_t>(iy) * w;
                for (int ix = 0; ix < w; ++ix) dst[ix] += src[2 * ix];
              }
            }
        }
    };
  }
  return out;
}

template <typename T>
Var<T> concat_c(const Var<T>& a, const Var<T>& b) {
  if (a.val().ndim() != 4 || b.val().ndim() != 4 || a.val().n() != b.val().n() ||
      a.val().h() != b.val().h() || a.val().w() != b.val().w())
    throw std::invalid_argument("concat_c: incompatible shapes");
  const int n = a.val().n(), ca = a.val().c(), cb = b.val().c();
  const int64_t plane = a.val().plane();
  Tensor<T> y({n, ca + cb, a.val().h(), a.val().w()});
  for (int in = 0; in < n; ++in) {
    std::memcpy(y.chan(in, 0), a.val().chan(in, 0), sizeof(T) * ca * plane);
    std::memcpy(y.chan(in, ca), b.val().chan(in, 0), sizeof(T) * cb * plane);
  }
  Var<T> out = make_result(std::move(y), {a, b});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* an = a.node_.get();
    Node<T>* bn = b.node_.get();
    out.node_->backward_fn = [on, an, bn, n, ca, cb, plane] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (int in = 0; in < n; ++in) {
          const T* gy = on->grad.chan(in, 0);
          T* ga = an->grad.chan(in, 0);
          for (int64_t i = 0; i < ca * plane; ++i) ga[i] += gy[i];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int in = 0; in < n; ++in) {
          const T* gy = on->grad.chan(in, ca);
          T* gb = bn->grad.chan(in, 0);
          for (int64_t i = 0; i < cb * plane; ++i) gb[i] += gy[i];
        }
      }
    };
  }
  return out;
}

template <typename T>
Var<T> slice_c(const Var<T>& x, int start, int count) {
  if (x.val().ndim() != 4 || start < 0 || count < 1 || start + count > x.val().c())
    throw std::invalid_argument("slice_c: channel range out of bounds");
  const int n = x.val().n();
  const int64_t plane = x.val().plane();
  Tensor<T> y({n, count, x.val().h(), x.val().w()});
  for (int in = 0; in < n; ++in)
    std::memcpy(y.chan(in, 0), x.val().chan(in, start), sizeof(T) * count * plane);
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, n, start, count, plane] {
      xn->ensure_grad();
      for (int in = 0; in < n; ++in) {
        const T* gy = on->grad.chan(in, 0);
        T* gx = xn->grad.chan(in, start);
        for (int64_t i = 0; i < count * plane; ++i) gx[i] += gy[i];
      }
    };
  }
  return out;
}

template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  if (x.val().ndim() != 4) throw std::invalid_argument("maxpool2: expected 4-d input");
  const int n = x.val().n(), c = x.val().c(), h = x.val().h(), w = x.val().w();
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw std::invalid_argument("maxpool2: input too small");
  Tensor<T> y({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int32_t>>(y.v.size());
  int64_t oi = 0;
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* xc = x.val().chan(in, ic);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          int64_t base = static_cast<int64_t>(2 * oy) * w + 2 * ox;
          int64_t best = base;
          T bv = xc[base];
          const int64_t cand[3] = {base + 1, base + w, base + w + 1};
          for (int64_t idx : cand)
            if (xc[idx] > bv) {
              bv = xc[idx];
              best = idx;
            }
          y.v[oi] = bv;
          (*argmax)[oi] = static_cast<int32_t>(best);
        }
    }
  Var<T> out = make_result(std::move(y), {x});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* xn = x.node_.get();
    out.node_->backward_fn = [on, xn, argmax, n, c, oh, ow] {
      xn->ensure_grad();
      int64_t oi = 0;
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic) {
          T* gx = xn->grad.chan(in, ic);
          for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i, ++oi)
            gx[(*argmax)[oi]] += on->grad.v[oi];
        }
    };
  }
  return out;
}

// ---- losses ----------------------------------------------------------------

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "mean_abs_diff");
  const int64_t n = a.val().numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(a.val().v[i]) - b.val().v[i]);
  Tensor<T> y({1});
  y.v[0] = static_cast<T>(acc / n);
  Var<T> out = make_result(std::move(y), {a, b});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* an = a.node_.get();
    Node<T>* bn = b.node_.get();
    out.node_->backward_fn = [on, an, bn, n] {
      T g = on->grad.v[0] / static_cast<T>(n);
      if (an->requires_grad) an->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        T d = an->val.v[i] - bn->val.v[i];
        T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
        if (an->requires_grad) an->grad.v[i] += s;
        if (bn->requires_grad) bn->grad.v[i] -= s;
      }
    };
  }
  return out;
}

// ---- sparse transposed attention ------------------------------------------

template <typename T>
void topk_mask_row(const T* row, int d, int k, uint8_t* mask) {
  if (k >= d) {
    std::fill(mask, mask + d, uint8_t(1));
    return;
  }
  if (k < 1) throw std::invalid_argument("topk_mask_row: k must be >= 1");
  std::vector<T> tmp(row, row + d);
  std::nth_element(tmp.begin(), tmp.begin() + (k - 1), tmp.end(), std::greater<T>());
  T thresh = tmp[k - 1];
  int greater = 0;
  for (int i = 0; i < d; ++i)
    if (row[i] > thresh) ++greater;
  int ties_left = k - greater;
  for (int i = 0; i < d; ++i) {
    if (row[i] > thresh) {
      mask[i] = 1;
    } else if (row[i] == thresh && ties_left > 0) {
      mask[i] = 1;
      --ties_left;
    } else {
      mask[i] = 0;
    }
  }
}

namespace {

template <typename T>
struct SsaSaved {
  int d = 0, heads = 0, branches = 0;
  int64_t tokens = 0;
  std::vector<int> kept;           // per branch
  std::vector<T> norm_q, norm_k;   // [n*heads*d]
  std::vector<T> attn;             // [n*heads*d*d], already divided by lambda
  std::vector<T> prob;             // [n*heads*branches*d*d]
  std::vector<uint8_t> mask;       // [n*heads*branches*d*d]
};

constexpr double kNormEps = 1e-12;

}  // namespace

template <typename T>
Var<T> ssa_core(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads,
                const Var<T>& lambda, const std::vector<double>& rates,
                bool literal_zero_prune,
                std::vector<std::vector<std::vector<uint8_t>>>* masks_out) {
  check_same_shape(q, k, "ssa_core");
  check_same_shape(q, v, "ssa_core");
  if (q.val().ndim() != 4) throw std::invalid_argument("ssa_core: expected 4-d input");
  const int n = q.val().n(), c = q.val().c();
  if (heads < 1 || c % heads != 0)
    throw std::invalid_argument("ssa_core: channels not divisible by head count");
  if (lambda.val().numel() != heads)
    throw std::invalid_argument("ssa_core: lambda must hold one scale per head");
  if (rates.empty()) throw std::invalid_argument("ssa_core: need at least one top-k rate");
  const int d = c / heads;
  const int64_t tokens = q.val().plane();
  const int branches = static_cast<int>(rates.size());

  auto saved = std::make_shared<SsaSaved<T>>();
  saved->d = d;
  saved->heads = heads;
  saved->branches = branches;
  saved->tokens = tokens;
  for (double r : rates) {
    if (r <= 0.0 || r > 1.0) throw std::invalid_argument("ssa_core: rate out of (0,1]");
    int kb = static_cast<int>(std::ceil(r * d));
    saved->kept.push_back(std::clamp(kb, 1, d));
  }
  saved->norm_q.resize(static_cast<size_t>(n) * heads * d);
  saved->norm_k.resize(static_cast<size_t>(n) * heads * d);
  saved->attn.resize(static_cast<size_t>(n) * heads * d * d);
  saved->prob.resize(static_cast<size_t>(n) * heads * branches * d * d);
  saved->mask.resize(static_cast<size_t>(n) * heads * branches * d * d);

  if (masks_out) {
    masks_out->assign(branches, std::vector<std::vector<uint8_t>>(
                                    static_cast<size_t>(n) * heads,
                                    std::vector<uint8_t>(static_cast<size_t>(d) * d)));
  }

  Tensor<T> y(q.val().shape);
  std::vector<T> qt(static_cast<size_t>(d) * tokens), kt(static_cast<size_t>(d) * tokens);
  std::vector<T> pavg(static_cast<size_t>(d) * d);

  for (int in = 0; in < n; ++in) {
    for (int h = 0; h < heads; ++h) {
      const int64_t head_idx = static_cast<int64_t>(in) * heads + h;
      const T* qbase = q.val().chan(in, h * d);
      const T* kbase = k.val().chan(in, h * d);
      const T* vbase = v.val().chan(in, h * d);
      T* nq = saved->norm_q.data() + head_idx * d;
      T* nk = saved->norm_k.data() + head_idx * d;
      // L2-normalize each channel's token vector.
      for (int i = 0; i < d; ++i) {
        const T* row = qbase + static_cast<int64_t>(i) * tokens;
        double ss = kNormEps;
        for (int64_t t = 0; t < tokens; ++t) ss += static_cast<double>(row[t]) * row[t];
        T r = static_cast<T>(std::sqrt(ss));
        nq[i] = r;
        T* dst = qt.data() + static_cast<int64_t>(i) * tokens;
        for (int64_t t = 0; t < tokens; ++t) dst[t] = row[t] / r;
      }
      for (int i = 0; i < d; ++i) {
        const T* row = kbase + static_cast<int64_t>(i) * tokens;
        double ss = kNormEps;
        for (int64_t t = 0; t < tokens; ++t) ss += static_cast<double>(row[t]) * row[t];
        T r = static_cast<T>(std::sqrt(ss));
        nk[i] = r;
        T* dst = kt.data() + static_cast<int64_t>(i) * tokens;
        for (int64_t t = 0; t < tokens; ++t) dst[t] = row[t] / r;
      }

      T* attn = saved->attn.data() + head_idx * d * d;
      gemm<T>(false, true, d, d, static_cast<int>(tokens), T(1), qt.data(),
              static_cast<int>(tokens), kt.data(), static_cast<int>(tokens), T(0), attn, d);
      const T lam = lambda.val().v[h];
      for (int i = 0; i < d * d; ++i) attn[i] /= lam;

      std::fill(pavg.begin(), pavg.end(), T(0));
      for (int b = 0; b < branches; ++b) {
        const int kb = saved->kept[b];
        T* prob = saved->prob.data() + (head_idx * branches + b) * d * d;
        uint8_t* mask = saved->mask.data() + (head_idx * branches + b) * d * d;
        for (int row = 0; row < d; ++row) {
          const T* mrow = attn + static_cast<int64_t>(row) * d;
          uint8_t* mk = mask + static_cast<int64_t>(row) * d;
          T* pr = prob + static_cast<int64_t>(row) * d;
          topk_mask_row(mrow, d, kb, mk);
          if (literal_zero_prune) {
            // Pruned entries enter the softmax as literal zeros.
            double mx = -1e300;
            for (int j = 0; j < d; ++j) mx = std::max(mx, static_cast<double>(mk[j] ? mrow[j] : T(0)));
            double sum = 0.0;
            for (int j = 0; j < d; ++j) {
              double e = std::exp(static_cast<double>(mk[j] ? mrow[j] : T(0)) - mx);
              pr[j] = static_cast<T>(e);
              sum += e;
            }
            for (int j = 0; j < d; ++j) pr[j] = static_cast<T>(pr[j] / sum);
          } else {
            double mx = -1e300;
            for (int j = 0; j < d; ++j)
              if (mk[j]) mx = std::max(mx, static_cast<double>(mrow[j]));
            double sum = 0.0;
            for (int j = 0; j < d; ++j) {
              if (mk[j]) {
                double e = std::exp(static_cast<double>(mrow[j]) - mx);
                pr[j] = static_cast<T>(e);
                sum += e;
              } else {
                pr[j] = T(0);
              }
            }
            for (int j = 0; j < d; ++j)
              if (mk[j]) pr[j] = static_cast<T>(pr[j] / sum);
          }
        }
        if (masks_out)
          std::copy(mask, mask + static_cast<size_t>(d) * d,
                    (*masks_out)[b][head_idx].begin());
        for (int i = 0; i < d * d; ++i) pavg[i] += prob[i];
      }
      const T invb = T(1) / static_cast<T>(branches);
      for (int i = 0; i < d * d; ++i) pavg[i] *= invb;

      gemm<T>(false, false, d, static_cast<int>(tokens), d, T(1), pavg.data(), d, vbase,
              static_cast<int>(tokens), T(0), y.chan(in, h * d), static_cast<int>(tokens));
    }
  }

  Var<T> out = make_result(std::move(y), {q, k, v, lambda});
  if (out.requires_grad()) {
    Node<T>* on = out.node_.get();
    Node<T>* qn = q.node_.get();
    Node<T>* kn = k.node_.get();
    Node<T>* vn = v.node_.get();
    Node<T>* ln = lambda.node_.get();
    out.node_->backward_fn = [on, qn, kn, vn, ln, saved, n, heads, literal_zero_prune] {
      const int d = saved->d;
      const int branches = saved->branches;
      const int64_t tokens = saved->tokens;
      qn->ensure_grad();
      kn->ensure_grad();
      vn->ensure_grad();
      if (ln->requires_grad) ln->ensure_grad();

      std::vector<T> qt(static_cast<size_t>(d) * tokens), kt(static_cast<size_t>(d) * tokens);
      std::vector<T> dqt(qt.size()), dkt(kt.size());
      std::vector<T> pavg(static_cast<size_t>(d) * d), dp(static_cast<size_t>(d) * d);
      std::vector<T> dattn(static_cast<size_t>(d) * d);

      for (int in = 0; in < n; ++in) {
        for (int h = 0; h < heads; ++h) {
          const int64_t head_idx = static_cast<int64_t>(in) * heads + h;
          const T* gy = on->grad.chan(in, h * d);
          const T* vbase = vn->val.chan(in, h * d);
          const T* attn = saved->attn.data() + head_idx * d * d;
          const T* nq = saved->norm_q.data() + head_idx * d;
          const T* nk = saved->norm_k.data() + head_idx * d;
          const T lam = ln->val.v[h];

          // Rebuild the averaged probability matrix.
          std::fill(pavg.begin(), pavg.end(), T(0));
          for (int b = 0; b < branches; ++b) {
            const T* prob = saved->prob.data() + (head_idx * branches + b) * d * d;
            for (int i = 0; i < d * d; ++i) pavg[i] += prob[i];
          }
          const T invb = T(1) / static_cast<T>(branches);
          for (int i = 0; i < d * d; ++i) pavg[i] *= invb;

          // dV += Pavg^T * dY
          gemm<T>(true, false, d, static_cast<int>(tokens), d, T(1), pavg.data(), d, gy,
                  static_cast<int>(tokens), T(1), vn->grad.chan(in, h * d),
                  static_cast<int>(tokens));

          // dPavg = dY * V^T; each branch receives dPavg / branches.
          gemm<T>(false, true, d, d, static_cast<int>(tokens), T(1), gy,
                  static_cast<int>(tokens), vbase, static_cast<int>(tokens), T(0), dp.data(),
                  d);

          std::fill(dattn.begin(), dattn.end(), T(0));
          for (int b = 0; b < branches; ++b) {
            const T* prob = saved->prob.data() + (head_idx * branches + b) * d * d;
            const uint8_t* mask = saved->mask.data() + (head_idx * branches + b) * d * d;
            for (int row = 0; row < d; ++row) {
              const T* pr = prob + static_cast<int64_t>(row) * d;
              const uint8_t* mk = mask + static_cast<int64_t>(row) * d;
              const T* dpr = dp.data() + static_cast<int64_t>(row) * d;
              double dot = 0.0;
              for (int j = 0; j < d; ++j) dot += static_cast<double>(dpr[j]) * invb * pr[j];
              T* da = dattn.data() + static_cast<int64_t>(row) * d;
              for (int j = 0; j < d; ++j) {
                double g = pr[j] * (static_cast<double>(dpr[j]) * invb - dot);
                // In literal-zero mode the pruned softmax inputs are constants.
                if (mk[j]) da[j] += static_cast<T>(g);
              }
            }
          }

          if (ln->requires_grad) {
            double dlam = 0.0;
            for (int i = 0; i < d * d; ++i)
              dlam -= static_cast<double>(dattn[i]) * attn[i] / lam;
            ln->grad.v[h] += static_cast<T>(dlam);
          }
          // dS = dattn / lambda where S = Qt * Kt^T (attn = S / lambda).
          for (int i = 0; i < d * d; ++i) dattn[i] /= lam;

          // Rebuild normalized Q/K rows.
          const T* qbase = qn->val.chan(in, h * d);
          const T* kbase = kn->val.chan(in, h * d);
          for (int i = 0; i < d; ++i) {
            const T* row = qbase + static_cast<int64_t>(i) * tokens;
            T* dst = qt.data() + static_cast<int64_t>(i) * tokens;
            for (int64_t t = 0; t < tokens; ++t) dst[t] = row[t] / nq[i];
          }
          for (int i = 0; i < d; ++i) {
            const T* row = kbase + static_cast<int64_t>(i) * tokens;
            T* dst = kt.data() + static_cast<int64_t>(i) * tokens;
            for (int64_t t = 0; t < tokens; ++t) dst[t] = row[t] / nk[i];
          }

          // dQt = dS * Kt ; dKt = dS^T * Qt
          gemm<T>(false, false, d, static_cast<int>(tokens), d, T(1), dattn.data(), d,
                  kt.data(), static_cast<int>(tokens), T(0), dqt.data(),
                  static_cast<int>(tokens));
          gemm<T>(true, false, d, static_cast<int>(tokens), d, T(1), dattn.data(), d,
                  qt.data(), static_cast<int>(tokens), T(0), dkt.data(),
                  static_cast<int>(tokens));

          // Through the row normalization: dq = dqt/r - q * <dqt,q> / r^3.
          T* gq = qn->grad.chan(in, h * d);
          T* gk = kn->grad.chan(in, h * d);
          for (int i = 0; i < d; ++i) {
            const T* row = qbase + static_cast<int64_t>(i) * tokens;
            const T* dr = dqt.data() + static_cast<int64_t>(i) * tokens;
            T* g = gq + static_cast<int64_t>(i) * tokens;
            double dot = 0.0;
            for (int64_t t = 0; t < tokens; ++t) dot += static_cast<double>(dr[t]) * row[t];
            double r = nq[i], r3 = r * r * r;
            for (int64_t t = 0; t < tokens; ++t)
              g[t] += static_cast<T>(dr[t] / r - row[t] * dot / r3);
          }
          for (int i = 0; i < d; ++i) {
            const T* row = kbase + static_cast<int64_t>(i) * tokens;
            const T* dr = dkt.data() + static_cast<int64_t>(i) * tokens;
            T* g = gk + static_cast<int64_t>(i) * tokens;
            double dot = 0.0;
            for (int64_t t = 0; t < tokens; ++t) dot += static_cast<double>(dr[t]) * row[t];
            double r = nk[i], r3 = r * r * r;
            for (int64_t t = 0; t < tokens; ++t)
              g[t] += static_cast<T>(dr[t] / r - row[t] * dot / r3);
          }
        }
      }
    };
  }
  return out;
}

// ---- plain tensor utilities --------------------------------------------------

namespace {
inline int reflect_index(int i, int n) {
  // Reflection without edge repeat, applied repeatedly for large pads.
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}
}  // namespace

template <typename T>
Tensor<T> reflect_pad2(const Tensor<T>& x, int top, int bottom, int left, int right) {
  const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
  Tensor<T> y({n, c, h + top + bottom, w + left + right});
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const T* src = x.chan(in, ic);
      T* dst = y.chan(in, ic);
      for (int oy = 0; oy < h + top + bottom; ++oy) {
        int iy = reflect_index(oy - top, h);
        for (int ox = 0; ox < w + left + right; ++ox) {
          int ix = reflect_index(ox - left, w);
          dst[static_cast<int64_t>(oy) * (w + left + right) + ox] =
              src[static_cast<int64_t>(iy) * w + ix];
        }
      }
    }
  return y;
}

template <typename T>
Tensor<T> crop2(const Tensor<T>& x, int top, int left, int out_h, int out_w) {
  if (top + out_h > x.h() || left + out_w > x.w())
    throw std::invalid_argument("crop2: window exceeds input");
  Tensor<T> y({x.n(), x.c(), out_h, out_w});
  for (int in = 0; in < x.n(); ++in)
    for (int ic = 0; ic < x.c(); ++ic) {
      const T* src = x.chan(in, ic);
      T* dst = y.chan(in, ic);
      for (int oy = 0; oy < out_h; ++oy)
        std::memcpy(dst + static_cast<int64_t>(oy) * out_w,
                    src + static_cast<int64_t>(top + oy) * x.w() + left, sizeof(T) * out_w);
    }
  return y;
}

// ---- instantiations ----------------------------------------------------------

#define SSHNET_INSTANTIATE_OPS(T)                                                             \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale<T>(const Var<T>&, double);                                           \
  template Var<T> clamp01<T>(const Var<T>&);                                                  \
  template Var<T> channel_affine<T>(const Var<T>&, const std::vector<double>&,                \
                                    const std::vector<double>&);                              \
  template Var<T> gelu<T>(const Var<T>&);                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                  \
  template Var<T> relu<T>(const Var<T>&);                                                     \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int);      \
  template Var<T> layer_norm_chan<T>(const Var<T>&, const Var<T>&, const Var<T>&);            \
  template Var<T> simple_gate<T>(const Var<T>&);                                              \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                          \
  template Var<T> mul_bcast_c<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> pixel_shuffle2<T>(const Var<T>&);                                           \
  template Var<T> concat_c<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> slice_c<T>(const Var<T>&, int, int);                                        \
  template Var<T> maxpool2<T>(const Var<T>&);                                                 \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                             \
  template void topk_mask_row<T>(const T*, int, int, uint8_t*);                               \
  template Var<T> ssa_core<T>(const Var<T>&, const Var<T>&, const Var<T>&, int,               \
                              const Var<T>&, const std::vector<double>&, bool,                \
                              std::vector<std::vector<std::vector<uint8_t>>>*);               \
  template Tensor<T> reflect_pad2<T>(const Tensor<T>&, int, int, int, int);                   \
  template Tensor<T> crop2<T>(const Tensor<T>&, int, int, int, int);

SSHNET_INSTANTIATE_OPS(float)
SSHNET_INSTANTIATE_OPS(double)
#undef SSHNET_INSTANTIATE_OPS

}  // namespace sshnet::nn
