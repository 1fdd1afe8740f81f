#pragma once

#include <cstdint>

#ifndef LHGNN_NO_BLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace lhgnn::linalg {

// C = alpha * op(A) op(B) + beta * C, row-major. op is transpose when the
// corresponding flag is set. Shapes are the post-op ones: op(A) is m x k,
// op(B) is k x n.
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
                 const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
                 double* c, int64_t ldc) {
#ifndef LHGNN_NO_BLAS
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb), beta,
              c, static_cast<int>(ldc));
#else
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) c[i * ldc + j] *= beta;
    for (int64_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * lda + i] : a[i * lda + p];
      if (av == 0.0) continue;
      const double s = alpha * av;
      for (int64_t j = 0; j < n; ++j) {
        const double bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        c[i * ldc + j] += s * bv;
      }
    }
  }
#endif
}

// Pin the BLAS to one thread: results must be bitwise reproducible and the
// library manages its own parallel regions.
inline void init_single_thread() {
#ifndef LHGNN_NO_BLAS
  openblas_set_num_threads(1);
#endif
}

}  // namespace lhgnn::linalg
