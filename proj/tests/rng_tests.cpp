#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "ecoforecast/io.hpp"
#include "ecoforecast/rng.hpp"

using namespace ecoforecast;

TEST_CASE("engine is deterministic for a fixed seed") {
    rng::Engine a(123);
    rng::Engine b(123);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
    rng::Engine a(1);
    rng::Engine b(2);
    int equal = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    CHECK(equal == 0);
}

TEST_CASE("uniform01 stays in [0,1) and covers the range") {
    rng::Engine eng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = eng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.001);
    CHECK(hi > 0.999);
}

TEST_CASE("below is unbiased over a small modulus") {
    rng::Engine eng(11);
    std::vector<int> counts(5, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[eng.below(5)];
    for (int c : counts) {
        CHECK(c > n / 5 - 1500);
        CHECK(c < n / 5 + 1500);
    }
}

TEST_CASE("normal mean and variance match the parameters") {
    rng::Engine eng(19);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = eng.normal(3.0, 2.0);
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean == doctest::Approx(3.0).epsilon(0.01));
    CHECK(var == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("about 99.73 percent of normal draws fall within 3 sigma") {
    rng::Engine eng(23);
    const int n = 200000;
    int inside = 0;
    for (int i = 0; i < n; ++i)
        if (std::fabs(eng.normal()) <= 3.0) ++inside;
    CHECK(static_cast<double>(inside) / n == doctest::Approx(0.9973).epsilon(0.001));
}

TEST_CASE("exponential has the requested mean") {
    rng::Engine eng(29);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) sum += eng.exponential(0.5);
    CHECK(sum / n == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("shuffle produces a permutation and is seed stable") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    std::vector<int> w = v;
    rng::Engine a(5);
    rng::Engine b(5);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("derive_seed separates stages and indices") {
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100; ++i)
        seen.insert(rng::derive_seed(42, "scenario", i));
    seen.insert(rng::derive_seed(42, "od_table", 0));
    seen.insert(rng::derive_seed(43, "od_table", 0));
    CHECK(seen.size() == 102);
    CHECK(rng::derive_seed(42, "scenario", 1) ==
          rng::derive_seed(42, "scenario", 1));
}

TEST_CASE("fnv1a64 matches the reference offset basis on empty input") {
    CHECK(io::fnv1a64_bytes("") == 0xcbf29ce484222325ull);
    CHECK(io::fnv1a64_bytes("a") != io::fnv1a64_bytes("b"));
}

TEST_CASE("fmt_double round-trips exactly") {
    rng::Engine eng(31);
    for (int i = 0; i < 1000; ++i) {
        const double x = (eng.uniform01() - 0.5) * std::pow(10.0, eng.below(7));
        CHECK(io::parse_double(io::fmt_double(x)) == x);
    }
    CHECK(io::fmt_double(0.7) == "0.7");
}
