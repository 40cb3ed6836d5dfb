#pragma once

namespace fpnr::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C.
// op(A) is M x K, op(B) is K x N, C is M x N. Backed by OpenBLAS when the
// build finds it, otherwise by a blocked scalar kernel.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace fpnr::detail
