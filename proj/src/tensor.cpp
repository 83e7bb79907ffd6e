#include "tesla/tensor.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace tesla {

void init_blas() { openblas_set_num_threads(1); }

void dgemm_rm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
              const double* b, double beta, double* c) {
    if (m == 0 || n == 0) return;
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, trans_a ? m : k, b,
                trans_b ? k : n, beta, c, n);
}

void dgemm_ld(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
              int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    if (m == 0 || n == 0) return;
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace tesla
