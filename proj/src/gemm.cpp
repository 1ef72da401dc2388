#include "sshnet/nn/gemm.hpp"

#include <Eigen/Dense>

namespace sshnet::nn {

namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
                          Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<>>;

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  MatMap<T> cm(c, m, n, Eigen::OuterStride<>(ldc));
  ConstMatMap<T> am(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  ConstMatMap<T> bm(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));

  auto apply = [&](const auto& prod) {
    if (beta == T(0)) {
      cm.noalias() = alpha * prod;
    } else {
      if (beta != T(1)) cm *= beta;
      cm.noalias() += alpha * prod;
    }
  };

  if (!trans_a && !trans_b)
    apply(am * bm);
  else if (trans_a && !trans_b)
    apply(am.transpose() * bm);
  else if (!trans_a && trans_b)
    apply(am * bm.transpose());
  else
    apply(am.transpose() * bm.transpose());
}

template void gemm<float>(bool, bool, int, int, int, float, const float*, int, const float*,
                          int, float, float*, int);
template void gemm<double>(bool, bool, int, int, int, double, const double*, int, const double*,
                           int, double, double*, int);

}  // namespace sshnet::nn
