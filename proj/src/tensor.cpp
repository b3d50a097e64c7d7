#include "picg/tensor.hpp"

#include <cstring>

namespace picg {

namespace {

// C = alpha * A * B + beta * C, A[m,k] row-major lda, B[k,n] ldb.
void gemm_nn(int64_t m, int64_t n, int64_t k, double alpha, const double* a, int64_t lda,
             const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * ldc;
        if (beta == 0.0)
            std::memset(ci, 0, size_t(n) * sizeof(double));
        else if (beta != 1.0)
            for (int64_t j = 0; j < n; ++j) ci[j] *= beta;
        const double* ai = a + i * lda;
        for (int64_t p = 0; p < k; ++p) {
            const double av = alpha * ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * ldb;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C = alpha * A^T * B + beta * C, A[k,m] lda, B[k,n] ldb.
void gemm_tn(int64_t m, int64_t n, int64_t k, double alpha, const double* a, int64_t lda,
             const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * ldc;
        if (beta == 0.0)
            std::memset(ci, 0, size_t(n) * sizeof(double));
        else if (beta != 1.0)
            for (int64_t j = 0; j < n; ++j) ci[j] *= beta;
        for (int64_t p = 0; p < k; ++p) {
            const double av = alpha * a[p * lda + i];
            if (av == 0.0) continue;
            const double* bp = b + p * ldb;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C = alpha * A * B^T + beta * C, A[m,k] lda, B[n,k] ldb.
void gemm_nt(int64_t m, int64_t n, int64_t k, double alpha, const double* a, int64_t lda,
             const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * lda;
        double* ci = c + i * ldc;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * ldb;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * ci[j]);
        }
    }
}

// C = alpha * A^T * B^T + beta * C, A[k,m], B[n,k].
void gemm_tt(int64_t m, int64_t n, int64_t k, double alpha, const double* a, int64_t lda,
             const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * ldc;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * ldb;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[p * lda + i] * bj[p];
            ci[j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * ci[j]);
        }
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
          int64_t ldc) {
    if (!trans_a && !trans_b)
        gemm_nn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    else if (trans_a && !trans_b)
        gemm_tn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    else if (!trans_a && trans_b)
        gemm_nt(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    else
        gemm_tt(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace picg
