#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "ecoforecast/kernels.hpp"
#include "ecoforecast/rng.hpp"

using namespace ecoforecast;

namespace {

std::vector<double> random_vec(rng::Engine& eng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = eng.uniform(-2.0, 2.0);
    return v;
}

// Backends accumulate in different orders, so reductions are compared with
// a relative tolerance scaled to the magnitude of the terms.
void check_close(double a, double b, double scale) {
    CHECK(std::fabs(a - b) <= 1e-12 * (1.0 + scale));
}

}  // namespace

#if defined(__x86_64__) || defined(_M_X64)

TEST_CASE("scalar and avx2 reductions agree on random vectors") {
    const kernels::Ops& s = kernels::detail::scalar_ops;
    const kernels::Ops& v = kernels::detail::avx2_ops;
    rng::Engine eng(101);
    // Lengths straddle the 4-lane width, including ragged tails.
    for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 15, 64, 1000, 1003}) {
        const std::vector<double> a = random_vec(eng, n);
        const std::vector<double> b = random_vec(eng, n);
        check_close(s.dot(a.data(), b.data(), n), v.dot(a.data(), b.data(), n),
                    4.0 * n);
        check_close(s.sum(a.data(), n), v.sum(a.data(), n), 2.0 * n);
        check_close(s.sumsq(a.data(), n), v.sumsq(a.data(), n), 4.0 * n);
        check_close(s.sqdist(a.data(), b.data(), n),
                    v.sqdist(a.data(), b.data(), n), 16.0 * n);
    }
}

TEST_CASE("scalar and avx2 elementwise kernels agree") {
    const kernels::Ops& s = kernels::detail::scalar_ops;
    const kernels::Ops& v = kernels::detail::avx2_ops;
    rng::Engine eng(103);
    for (std::size_t n : {1, 3, 4, 9, 128, 1001}) {
        const std::vector<double> x = random_vec(eng, n);
        std::vector<double> y1 = random_vec(eng, n);
        std::vector<double> y2 = y1;
        s.axpy(0.37, x.data(), y1.data(), n);
        v.axpy(0.37, x.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::fabs(y1[i] - y2[i]) <= 1e-15 * (1.0 + std::fabs(y1[i])));

        std::vector<double> z1 = random_vec(eng, n);
        std::vector<double> z2 = z1;
        s.scale(z1.data(), -1.75, n);
        v.scale(z2.data(), -1.75, n);
        CHECK(z1 == z2);  // one multiply per element in both backends
    }
}

TEST_CASE("scalar and avx2 matvec agree") {
    const kernels::Ops& s = kernels::detail::scalar_ops;
    const kernels::Ops& v = kernels::detail::avx2_ops;
    rng::Engine eng(107);
    for (auto [rows, cols] : std::vector<std::pair<std::size_t, std::size_t>>{
             {1, 1}, {3, 5}, {4, 4}, {16, 33}, {40, 100}}) {
        const std::vector<double> a = random_vec(eng, rows * cols);
        const std::vector<double> x = random_vec(eng, cols);
        const std::vector<double> b = random_vec(eng, rows);
        std::vector<double> y1(rows), y2(rows);
        s.matvec(a.data(), x.data(), b.data(), y1.data(), rows, cols);
        v.matvec(a.data(), x.data(), b.data(), y2.data(), rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            check_close(y1[i], y2[i], 4.0 * cols);
        // Null bias means zero bias.
        s.matvec(a.data(), x.data(), nullptr, y1.data(), rows, cols);
        v.matvec(a.data(), x.data(), nullptr, y2.data(), rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            check_close(y1[i], y2[i], 4.0 * cols);
    }
}

#endif  // x86_64

TEST_CASE("scalar reference values are exact on tiny cases") {
    const kernels::Ops& s = kernels::detail::scalar_ops;
    const double a[] = {1.0, 2.0, 3.0};
    const double b[] = {4.0, 5.0, 6.0};
    CHECK(s.dot(a, b, 3) == 32.0);
    CHECK(s.sum(a, 3) == 6.0);
    CHECK(s.sumsq(a, 3) == 14.0);
    CHECK(s.sqdist(a, b, 3) == 27.0);
    double y[] = {1.0, 1.0, 1.0};
    s.axpy(2.0, a, y, 3);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 5.0);
    CHECK(y[2] == 7.0);
}

TEST_CASE("backend switching changes the active table") {
    const kernels::Backend original = kernels::active_backend();
    kernels::set_backend(kernels::Backend::scalar);
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
    const double a[] = {1.0, 2.0};
    CHECK(kernels::dot(a, a, 2) == 5.0);
    kernels::set_backend(original);
    CHECK(kernels::active_backend() == original);
}
