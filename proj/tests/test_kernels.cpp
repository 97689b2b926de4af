#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "mvhan/kernels.hpp"
#include "mvhan/rng.hpp"

using namespace mvhan;

namespace {

std::vector<double> rand_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

} // namespace

// The OpenMP flavors must match the serial reference bit for bit: every
// output element is produced by one thread with a fixed-order inner loop.

TEST_CASE("matmul variants: omp path is bit-identical to serial") {
    Rng rng(7);
    for (auto [m, k, n] : {std::tuple<size_t, size_t, size_t>{1, 1, 1},
                           {3, 5, 2},
                           {17, 9, 33},
                           {64, 31, 40}}) {
        auto A = rand_vec(m * k, rng);
        auto B = rand_vec(k * n, rng);
        std::vector<double> c_serial(m * n), c_omp(m * n);
        kernels::matmul_nn_serial(A.data(), B.data(), c_serial.data(), m, k, n);
        kernels::matmul_nn_omp(A.data(), B.data(), c_omp.data(), m, k, n);
        CHECK(c_serial == c_omp);

        auto At = rand_vec(m * n, rng);
        auto Bt = rand_vec(k * n, rng);
        std::vector<double> nt_serial(m * k), nt_omp(m * k);
        kernels::matmul_nt_serial(At.data(), Bt.data(), nt_serial.data(), m, n, k);
        kernels::matmul_nt_omp(At.data(), Bt.data(), nt_omp.data(), m, n, k);
        CHECK(nt_serial == nt_omp);

        auto Atn = rand_vec(m * k, rng);
        auto Btn = rand_vec(m * n, rng);
        std::vector<double> tn_serial(k * n), tn_omp(k * n);
        kernels::matmul_tn_serial(Atn.data(), Btn.data(), tn_serial.data(), m, k, n);
        kernels::matmul_tn_omp(Atn.data(), Btn.data(), tn_omp.data(), m, k, n);
        CHECK(tn_serial == tn_omp);
    }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transposition") {
    Rng rng(11);
    const size_t m = 6, k = 4, n = 5;
    auto A = rand_vec(m * k, rng);
    auto B = rand_vec(k * n, rng);

    std::vector<double> Bt(n * k);
    for (size_t i = 0; i < k; ++i)
        for (size_t j = 0; j < n; ++j) Bt[j * k + i] = B[i * n + j];
    std::vector<double> via_nn(m * n), via_nt(m * n);
    kernels::matmul_nn_serial(A.data(), B.data(), via_nn.data(), m, k, n);
    kernels::matmul_nt_serial(A.data(), Bt.data(), via_nt.data(), m, k, n);
    for (size_t i = 0; i < via_nn.size(); ++i)
        CHECK(via_nt[i] == doctest::Approx(via_nn[i]).epsilon(1e-12));

    std::vector<double> At(k * m);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < k; ++j) At[j * m + i] = A[i * k + j];
    std::vector<double> C = rand_vec(m * n, rng);
    std::vector<double> via_tn(k * n), via_nn2(k * n);
    kernels::matmul_tn_serial(A.data(), C.data(), via_tn.data(), m, k, n);
    kernels::matmul_nn_serial(At.data(), C.data(), via_nn2.data(), k, m, n);
    for (size_t i = 0; i < via_tn.size(); ++i)
        CHECK(via_tn[i] == doctest::Approx(via_nn2[i]).epsilon(1e-12));
}

TEST_CASE("batched kernels: omp bit-identical to serial, blocks independent") {
    Rng rng(13);
    const size_t groups = 37, r = 5, c = 3;
    auto A = rand_vec(groups * r * c, rng);
    auto B = rand_vec(groups * r * c, rng);

    std::vector<double> s1(groups * r * r), s2(groups * r * r);
    kernels::batched_nt_serial(A.data(), B.data(), s1.data(), groups, r, c, r);
    kernels::batched_nt_omp(A.data(), B.data(), s2.data(), groups, r, c, r);
    CHECK(s1 == s2);

    auto W = rand_vec(groups * r * r, rng);
    std::vector<double> o1(groups * r * c), o2(groups * r * c);
    kernels::batched_nn_serial(W.data(), B.data(), o1.data(), groups, r, r, c);
    kernels::batched_nn_omp(W.data(), B.data(), o2.data(), groups, r, r, c);
    CHECK(o1 == o2);

    std::vector<double> t1(groups * c * c), t2(groups * c * c);
    kernels::batched_tn_serial(A.data(), B.data(), t1.data(), groups, r, c, c);
    kernels::batched_tn_omp(A.data(), B.data(), t2.data(), groups, r, c, c);
    CHECK(t1 == t2);

    // Group g of the batched product equals a standalone matmul on its block.
    for (size_t g : {size_t{0}, groups / 2, groups - 1}) {
        std::vector<double> lone(r * r);
        kernels::matmul_nt_serial(A.data() + g * r * c, B.data() + g * r * c,
                                  lone.data(), r, c, r);
        for (size_t i = 0; i < lone.size(); ++i)
            CHECK(lone[i] == s1[g * r * r + i]);
    }
}

TEST_CASE("elementwise, softmax and matvec: omp bit-identical to serial") {
    Rng rng(17);
    const size_t n = 10000;
    auto a = rand_vec(n, rng);
    auto b = rand_vec(n, rng);
    std::vector<double> y1(n), y2(n);

    kernels::add_serial(a.data(), b.data(), y1.data(), n);
    kernels::add_omp(a.data(), b.data(), y2.data(), n);
    CHECK(y1 == y2);

    kernels::mul_serial(a.data(), b.data(), y1.data(), n);
    kernels::mul_omp(a.data(), b.data(), y2.data(), n);
    CHECK(y1 == y2);

    kernels::relu_serial(a.data(), y1.data(), n);
    kernels::relu_omp(a.data(), y2.data(), n);
    CHECK(y1 == y2);

    kernels::scale_serial(a.data(), 3.25, y1.data(), n);
    kernels::scale_omp(a.data(), 3.25, y2.data(), n);
    CHECK(y1 == y2);

    const size_t rows = 400, cols = 25;
    kernels::softmax_rows_serial(a.data(), y1.data(), rows, cols);
    kernels::softmax_rows_omp(a.data(), y2.data(), rows, cols);
    CHECK(std::vector<double>(y1.begin(), y1.begin() + rows * cols) ==
          std::vector<double>(y2.begin(), y2.begin() + rows * cols));

    auto q = rand_vec(cols, rng);
    std::vector<double> m1(rows), m2(rows);
    kernels::matvec_serial(a.data(), q.data(), m1.data(), rows, cols);
    kernels::matvec_omp(a.data(), q.data(), m2.data(), rows, cols);
    CHECK(m1 == m2);
}

TEST_CASE("dispatch honors the parallel switch") {
    Rng rng(23);
    const size_t m = 40, k = 30, n = 20;
    auto A = rand_vec(m * k, rng);
    auto B = rand_vec(k * n, rng);
    std::vector<double> on(m * n), off(m * n);
    kernels::set_parallel(true);
    kernels::matmul_nn(A.data(), B.data(), on.data(), m, k, n);
    kernels::set_parallel(false);
    kernels::matmul_nn(A.data(), B.data(), off.data(), m, k, n);
    kernels::set_parallel(true);
    CHECK(on == off);
}
