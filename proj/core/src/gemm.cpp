#include "fpnr/gemm.hpp"

#include <vector>

#ifdef FPNR_WITH_OPENBLAS
#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace fpnr::detail {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  // Single BLAS thread keeps reductions in a fixed order run to run.
  static const bool pinned = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)pinned;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace fpnr::detail

#else

namespace fpnr::detail {

namespace {

inline double elem(const double* p, int ld, int i, int j, bool trans) {
  return trans ? p[static_cast<std::size_t>(j) * ld + i]
               : p[static_cast<std::size_t>(i) * ld + j];
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) crow[j] *= beta;
  }
  // i-k-j order keeps the inner loop contiguous over C and (untransposed) B.
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * ldc;
    for (int p = 0; p < k; ++p) {
      const double av = alpha * elem(a, lda, i, p, trans_a);
      if (av == 0.0) continue;
      if (!trans_b) {
        const double* brow = b + static_cast<std::size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<std::size_t>(j) * ldb + p];
      }
    }
  }
}

}  // namespace fpnr::detail

#endif
