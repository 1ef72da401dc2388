#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sshnet::nn {

// Dense row-major tensor. Feature maps are [N, C, H, W]; scalars are {1}.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(size_t i) const { return shape.at(i); }
  size_t ndim() const { return shape.size(); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  // [N,C,H,W] accessors for the common 4-d case.
  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  int64_t plane() const { return static_cast<int64_t>(shape[2]) * shape[3]; }

  T* chan(int in, int ic) {
    return v.data() + (static_cast<int64_t>(in) * shape[1] + ic) * plane();
  }
  const T* chan(int in, int ic) const {
    return v.data() + (static_cast<int64_t>(in) * shape[1] + ic) * plane();
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace sshnet::nn
