#pragma once

#include <cblas.h>

extern "C" void openblas_set_num_threads(int num_threads);

namespace vinpaint {

using real = double;

// Deterministic single-threaded BLAS. Multi-threaded reductions would change
// summation order between runs, which breaks the bitwise reproducibility
// contract of the training commands.
inline void pin_blas_single_thread() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}

// C = alpha * op(A) * op(B) + beta * C, row-major.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, real alpha,
                 const real* a, int lda, const real* b, int ldb, real beta,
                 real* c, int ldc) {
  pin_blas_single_thread();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace vinpaint
