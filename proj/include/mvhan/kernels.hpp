#pragma once

#include <cstddef>

namespace mvhan::kernels {

// Every kernel comes in a _serial and an _omp flavor plus an unsuffixed
// dispatcher. The OpenMP flavors split work over independent output elements
// only, so both flavors produce bit-identical results for any thread count;
// the serial flavors are the reference the tests compare against.

void set_parallel(bool on);
bool parallel_enabled();

// C(m x n) = A(m x k) * B(k x n), row-major.
void matmul_nn_serial(const double* A, const double* B, double* C,
                      size_t m, size_t k, size_t n);
void matmul_nn_omp(const double* A, const double* B, double* C,
                   size_t m, size_t k, size_t n);
void matmul_nn(const double* A, const double* B, double* C,
               size_t m, size_t k, size_t n);

// C(m x k) = A(m x n) * B(k x n)^T
void matmul_nt_serial(const double* A, const double* B, double* C,
                      size_t m, size_t n, size_t k);
void matmul_nt_omp(const double* A, const double* B, double* C,
                   size_t m, size_t n, size_t k);
void matmul_nt(const double* A, const double* B, double* C,
               size_t m, size_t n, size_t k);

// C(k x n) = A(m x k)^T * B(m x n)
void matmul_tn_serial(const double* A, const double* B, double* C,
                      size_t m, size_t k, size_t n);
void matmul_tn_omp(const double* A, const double* B, double* C,
                   size_t m, size_t k, size_t n);
void matmul_tn(const double* A, const double* B, double* C,
               size_t m, size_t k, size_t n);

// Batched variants over `groups` consecutive blocks; parallel over groups.
// A blocks are m x k, B blocks k x n, C blocks m x n.
void batched_nn_serial(const double* A, const double* B, double* C,
                       size_t groups, size_t m, size_t k, size_t n);
void batched_nn_omp(const double* A, const double* B, double* C,
                    size_t groups, size_t m, size_t k, size_t n);
void batched_nn(const double* A, const double* B, double* C,
                size_t groups, size_t m, size_t k, size_t n);

// A blocks m x k, B blocks n x k (multiplied transposed), C blocks m x n.
void batched_nt_serial(const double* A, const double* B, double* C,
                       size_t groups, size_t m, size_t k, size_t n);
void batched_nt_omp(const double* A, const double* B, double* C,
                    size_t groups, size_t m, size_t k, size_t n);
void batched_nt(const double* A, const double* B, double* C,
                size_t groups, size_t m, size_t k, size_t n);

// A blocks m x k (multiplied transposed), B blocks m x n, C blocks k x n.
void batched_tn_serial(const double* A, const double* B, double* C,
                       size_t groups, size_t m, size_t k, size_t n);
void batched_tn_omp(const double* A, const double* B, double* C,
                    size_t groups, size_t m, size_t k, size_t n);
void batched_tn(const double* A, const double* B, double* C,
                size_t groups, size_t m, size_t k, size_t n);

// Y = row-wise softmax of X (rows x cols), max-subtracted for stability.
void softmax_rows_serial(const double* X, double* Y, size_t rows, size_t cols);
void softmax_rows_omp(const double* X, double* Y, size_t rows, size_t cols);
void softmax_rows(const double* X, double* Y, size_t rows, size_t cols);

void relu_serial(const double* x, double* y, size_t n);
void relu_omp(const double* x, double* y, size_t n);
void relu(const double* x, double* y, size_t n);

void add_serial(const double* a, const double* b, double* y, size_t n);
void add_omp(const double* a, const double* b, double* y, size_t n);
void add(const double* a, const double* b, double* y, size_t n);

void mul_serial(const double* a, const double* b, double* y, size_t n);
void mul_omp(const double* a, const double* b, double* y, size_t n);
void mul(const double* a, const double* b, double* y, size_t n);

void scale_serial(const double* x, double c, double* y, size_t n);
void scale_omp(const double* x, double c, double* y, size_t n);
void scale(const double* x, double c, double* y, size_t n);

// y(rows) = M(rows x cols) * q(cols); the top-k scan's inner product pass.
void matvec_serial(const double* M, const double* q, double* y,
                   size_t rows, size_t cols);
void matvec_omp(const double* M, const double* q, double* y,
                size_t rows, size_t cols);
void matvec(const double* M, const double* q, double* y,
            size_t rows, size_t cols);

} // namespace mvhan::kernels
