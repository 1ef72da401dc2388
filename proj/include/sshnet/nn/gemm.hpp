#pragma once

namespace sshnet::nn {

// Row-major C (m x n) = alpha * op(A) * op(B) + beta * C.
// op(A) is m x k with leading dimension lda (of the stored matrix).
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

extern template void gemm<float>(bool, bool, int, int, int, float, const float*, int,
                                 const float*, int, float, float*, int);
extern template void gemm<double>(bool, bool, int, int, int, double, const double*, int,
                                  const double*, int, double, double*, int);

}  // namespace sshnet::nn
