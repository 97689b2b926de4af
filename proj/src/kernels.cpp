#include "mvhan/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace mvhan::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// Below these sizes the fork/join overhead outweighs the loop body.
constexpr size_t kMinParallelRows = 16;
constexpr size_t kMinParallelElems = 4096;
} // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------- matmul

void matmul_nn_serial(const double* A, const double* B, double* C,
                      size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        double* crow = C + i * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = A + i * k;
        for (size_t p = 0; p < k; ++p) {
            double a = arow[p];
            const double* brow = B + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

void matmul_nn_omp(const double* A, const double* B, double* C,
                   size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        double* crow = C + i * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = A + i * k;
        for (size_t p = 0; p < k; ++p) {
            double a = arow[p];
            const double* brow = B + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

void matmul_nn(const double* A, const double* B, double* C,
               size_t m, size_t k, size_t n) {
    if (parallel_enabled() && m >= kMinParallelRows)
        matmul_nn_omp(A, B, C, m, k, n);
    else
        matmul_nn_serial(A, B, C, m, k, n);
}

void matmul_nt_serial(const double* A, const double* B, double* C,
                      size_t m, size_t n, size_t k) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = A + i * n;
        double* crow = C + i * k;
        for (size_t j = 0; j < k; ++j) {
            const double* brow = B + j * n;
            double s = 0.0;
            for (size_t p = 0; p < n; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void matmul_nt_omp(const double* A, const double* B, double* C,
                   size_t m, size_t n, size_t k) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        const double* arow = A + i * n;
        double* crow = C + i * k;
        for (size_t j = 0; j < k; ++j) {
            const double* brow = B + j * n;
            double s = 0.0;
            for (size_t p = 0; p < n; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void matmul_nt(const double* A, const double* B, double* C,
               size_t m, size_t n, size_t k) {
    if (parallel_enabled() && m >= kMinParallelRows)
        matmul_nt_omp(A, B, C, m, n, k);
    else
        matmul_nt_serial(A, B, C, m, n, k);
}

void matmul_tn_serial(const double* A, const double* B, double* C,
                      size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < k; ++i) {
        double* crow = C + i * n;
        std::fill(crow, crow + n, 0.0);
        for (size_t p = 0; p < m; ++p) {
            double a = A[p * k + i];
            const double* brow = B + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

void matmul_tn_omp(const double* A, const double* B, double* C,
                   size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(k); ++i) {
        double* crow = C + i * n;
        std::fill(crow, crow + n, 0.0);
        for (size_t p = 0; p < m; ++p) {
            double a = A[p * k + i];
            const double* brow = B + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

void matmul_tn(const double* A, const double* B, double* C,
               size_t m, size_t k, size_t n) {
    if (parallel_enabled() && k >= kMinParallelRows)
        matmul_tn_omp(A, B, C, m, k, n);
    else
        matmul_tn_serial(A, B, C, m, k, n);
}

// ---------------------------------------------------------------- batched

namespace {

inline void block_nn(const double* A, const double* B, double* C,
                     size_t m, size_t k, size_t n) {
    matmul_nn_serial(A, B, C, m, k, n);
}

inline void block_nt(const double* A, const double* B, double* C,
                     size_t m, size_t k, size_t n) {
    // A: m x k, B: n x k, C: m x n
    matmul_nt_serial(A, B, C, m, k, n);
}

inline void block_tn(const double* A, const double* B, double* C,
                     size_t m, size_t k, size_t n) {
    // A: m x k (transposed), B: m x n, C: k x n
    matmul_tn_serial(A, B, C, m, k, n);
}

} // namespace

void batched_nn_serial(const double* A, const double* B, double* C,
                       size_t groups, size_t m, size_t k, size_t n) {
    for (size_t g = 0; g < groups; ++g)
        block_nn(A + g * m * k, B + g * k * n, C + g * m * n, m, k, n);
}

void batched_nn_omp(const double* A, const double* B, double* C,
                    size_t groups, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long g = 0; g < static_cast<long long>(groups); ++g)
        block_nn(A + g * m * k, B + g * k * n, C + g * m * n, m, k, n);
}

void batched_nn(const double* A, const double* B, double* C,
                size_t groups, size_t m, size_t k, size_t n) {
    if (parallel_enabled() && groups >= kMinParallelRows)
        batched_nn_omp(A, B, C, groups, m, k, n);
    else
        batched_nn_serial(A, B, C, groups, m, k, n);
}

void batched_nt_serial(const double* A, const double* B, double* C,
                       size_t groups, size_t m, size_t k, size_t n) {
    for (size_t g = 0; g < groups; ++g)
        block_nt(A + g * m * k, B + g * n * k, C + g * m * n, m, k, n);
}

void batched_nt_omp(const double* A, const double* B, double* C,
                    size_t groups, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long g = 0; g < static_cast<long long>(groups); ++g)
        block_nt(A + g * m * k, B + g * n * k, C + g * m * n, m, k, n);
}

void batched_nt(const double* A, const double* B, double* C,
                size_t groups, size_t m, size_t k, size_t n) {
    if (parallel_enabled() && groups >= kMinParallelRows)
        batched_nt_omp(A, B, C, groups, m, k, n);
    else
        batched_nt_serial(A, B, C, groups, m, k, n);
}

void batched_tn_serial(const double* A, const double* B, double* C,
                       size_t groups, size_t m, size_t k, size_t n) {
    for (size_t g = 0; g < groups; ++g)
        block_tn(A + g * m * k, B + g * m * n, C + g * k * n, m, k, n);
}

void batched_tn_omp(const double* A, const double* B, double* C,
                    size_t groups, size_t m, size_t k, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long g = 0; g < static_cast<long long>(groups); ++g)
        block_tn(A + g * m * k, B + g * m * n, C + g * k * n, m, k, n);
}

void batched_tn(const double* A, const double* B, double* C,
                size_t groups, size_t m, size_t k, size_t n) {
    if (parallel_enabled() && groups >= kMinParallelRows)
        batched_tn_omp(A, B, C, groups, m, k, n);
    else
        batched_tn_serial(A, B, C, groups, m, k, n);
}

// ---------------------------------------------------------------- rowwise

namespace {

inline void softmax_row(const double* x, double* y, size_t cols) {
    double mx = x[0];
    for (size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (size_t j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    double inv = 1.0 / sum;
    for (size_t j = 0; j < cols; ++j) y[j] *= inv;
}

} // namespace

void softmax_rows_serial(const double* X, double* Y, size_t rows, size_t cols) {
    for (size_t i = 0; i < rows; ++i)
        softmax_row(X + i * cols, Y + i * cols, cols);
}

void softmax_rows_omp(const double* X, double* Y, size_t rows, size_t cols) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(rows); ++i)
        softmax_row(X + i * cols, Y + i * cols, cols);
}

void softmax_rows(const double* X, double* Y, size_t rows, size_t cols) {
    if (parallel_enabled() && rows >= kMinParallelRows)
        softmax_rows_omp(X, Y, rows, cols);
    else
        softmax_rows_serial(X, Y, rows, cols);
}

// ------------------------------------------------------------ elementwise

#define MVHAN_EW(name, expr)                                                  \
    void name##_serial(const double* a, const double* b, double* y,           \
                       size_t n) {                                            \
        for (size_t i = 0; i < n; ++i) y[i] = (expr);                         \
    }                                                                         \
    void name##_omp(const double* a, const double* b, double* y, size_t n) {  \
        _Pragma("omp parallel for schedule(static)")                          \
        for (long long i = 0; i < static_cast<long long>(n); ++i)             \
            y[i] = (expr);                                                    \
    }                                                                         \
    void name(const double* a, const double* b, double* y, size_t n) {        \
        if (parallel_enabled() && n >= kMinParallelElems)                     \
            name##_omp(a, b, y, n);                                           \
        else                                                                  \
            name##_serial(a, b, y, n);                                        \
    }

MVHAN_EW(add, a[i] + b[i])
MVHAN_EW(mul, a[i] * b[i])
#undef MVHAN_EW

void relu_serial(const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_omp(const double* x, double* y, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu(const double* x, double* y, size_t n) {
    if (parallel_enabled() && n >= kMinParallelElems)
        relu_omp(x, y, n);
    else
        relu_serial(x, y, n);
}

void scale_serial(const double* x, double c, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = c * x[i];
}

void scale_omp(const double* x, double c, double* y, size_t n) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = c * x[i];
}

void scale(const double* x, double c, double* y, size_t n) {
    if (parallel_enabled() && n >= kMinParallelElems)
        scale_omp(x, c, y, n);
    else
        scale_serial(x, c, y, n);
}

// ----------------------------------------------------------------- matvec

void matvec_serial(const double* M, const double* q, double* y,
                   size_t rows, size_t cols) {
    for (size_t i = 0; i < rows; ++i) {
        const double* row = M + i * cols;
        double s = 0.0;
        for (size_t j = 0; j < cols; ++j) s += row[j] * q[j];
        y[i] = s;
    }
}

void matvec_omp(const double* M, const double* q, double* y,
                size_t rows, size_t cols) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(rows); ++i) {
        const double* row = M + i * cols;
        double s = 0.0;
        for (size_t j = 0; j < cols; ++j) s += row[j] * q[j];
        y[i] = s;
    }
}

void matvec(const double* M, const double* q, double* y,
            size_t rows, size_t cols) {
    if (parallel_enabled() && rows >= 256)
        matvec_omp(M, q, y, rows, cols);
    else
        matvec_serial(M, q, y, rows, cols);
}

} // namespace mvhan::kernels
