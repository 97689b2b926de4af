// Benchmarks the OpenMP kernels against their serial reference
// implementations: plain/batched matmul, row-softmax, and the index scan.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mvhan/kernels.hpp"
#include "mvhan/rng.hpp"

using namespace mvhan;

namespace {

std::vector<double> rand_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
    // Warm-up run, then best-of-reps.
    fn();
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double omp_ms) {
    std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %.2fx\n", name,
                serial_ms, omp_ms, serial_ms / omp_ms);
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without openmp; omp columns run the serial path\n");
#endif
    Rng rng(42);

    {
        const size_t m = 512, k = 256, n = 256;
        auto A = rand_vec(m * k, rng), B = rand_vec(k * n, rng);
        std::vector<double> C(m * n);
        report("matmul 512x256x256",
               time_ms([&] { kernels::matmul_nn_serial(A.data(), B.data(), C.data(), m, k, n); }, 5),
               time_ms([&] { kernels::matmul_nn_omp(A.data(), B.data(), C.data(), m, k, n); }, 5));
    }
    {
        // Attention-shaped batch: 2048 examples x 13 tokens x 16 dims.
        const size_t groups = 2048, r = 13, c = 16;
        auto Q = rand_vec(groups * r * c, rng), K = rand_vec(groups * r * c, rng);
        std::vector<double> S(groups * r * r);
        report("batched qk 2048x13x16",
               time_ms([&] { kernels::batched_nt_serial(Q.data(), K.data(), S.data(), groups, r, c, r); }, 5),
               time_ms([&] { kernels::batched_nt_omp(Q.data(), K.data(), S.data(), groups, r, c, r); }, 5));
    }
    {
        const size_t rows = 30000, cols = 13;
        auto X = rand_vec(rows * cols, rng);
        std::vector<double> Y(rows * cols);
        report("softmax_rows 30000x13",
               time_ms([&] { kernels::softmax_rows_serial(X.data(), Y.data(), rows, cols); }, 5),
               time_ms([&] { kernels::softmax_rows_omp(X.data(), Y.data(), rows, cols); }, 5));
    }
    {
        // Index scan: 100k vectors x 64 dims against one query.
        const size_t rows = 100000, cols = 64;
        auto M = rand_vec(rows * cols, rng), q = rand_vec(cols, rng);
        std::vector<double> y(rows);
        report("index scan 100000x64",
               time_ms([&] { kernels::matvec_serial(M.data(), q.data(), y.data(), rows, cols); }, 5),
               time_ms([&] { kernels::matvec_omp(M.data(), q.data(), y.data(), rows, cols); }, 5));
    }
    return 0;
}
