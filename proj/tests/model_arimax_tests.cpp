#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "ecoforecast/model_arimax.hpp"
#include "ecoforecast/rng.hpp"

using namespace ecoforecast;
using ecoforecast::arimax::ArimaxFit;
using ecoforecast::arimax::ArimaxSpec;

namespace {

std::vector<double> ar1_series(double c, double phi, double sd, int n,
                               std::uint64_t seed) {
    rng::Engine eng(seed);
    std::vector<double> y(n);
    y[0] = c / (1.0 - phi);
    for (int t = 1; t < n; ++t)
        y[t] = c + phi * y[t - 1] + eng.normal(0.0, sd);
    return y;
}

std::vector<double> random_walk(int n, std::uint64_t seed) {
    rng::Engine eng(seed);
    std::vector<double> y(n);
    y[0] = 0.0;
    for (int t = 1; t < n; ++t) y[t] = y[t - 1] + eng.normal(0.0, 1.0);
    return y;
}

}  // namespace

TEST_CASE("difference shrinks the series by d and matches hand values") {
    const std::vector<double> x = {1, 3, 6, 10};
    CHECK(arimax::difference(x, 0) == x);
    CHECK(arimax::difference(x, 1) == std::vector<double>{2, 3, 4});
    CHECK(arimax::difference(x, 2) == std::vector<double>{1, 1});
    CHECK_THROWS(arimax::difference({1.0}, 1));
    CHECK_THROWS(arimax::difference(x, -1));
}

TEST_CASE("undifference inverts difference for d = 1 and 2") {
    const std::vector<double> x = {1, 4, 9, 16, 25};
    for (int d : {1, 2}) {
        const std::vector<double> w = arimax::difference(x, d);
        const std::vector<double> head(x.begin(), x.begin() + d);
        CHECK(arimax::undifference(w, head, d) == x);
    }
    CHECK_THROWS(arimax::undifference({1.0}, {}, 1));
}

TEST_CASE("acf matches a brute-force computation") {
    const std::vector<double> x = {3.1, 4.1, 5.9, 2.6, 5.3,
                                   5.8, 9.7, 9.3, 2.3, 8.4};
    const std::vector<double> got = arimax::acf(x, 3);
    REQUIRE(got.size() == 3);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= x.size();
    double denom = 0.0;
    for (double v : x) denom += (v - mean) * (v - mean);
    for (int k = 1; k <= 3; ++k) {
        double num = 0.0;
        for (std::size_t t = k; t < x.size(); ++t)
            num += (x[t] - mean) * (x[t - k] - mean);
        CHECK(got[k - 1] == doctest::Approx(num / denom).epsilon(1e-12));
    }
    CHECK_THROWS(arimax::acf({1, 2, 3}, 2));       // too short
    CHECK_THROWS(arimax::acf({5, 5, 5, 5, 5}, 2));  // zero variance
}

TEST_CASE("pacf finds the AR(1) coefficient and cuts off after lag 1") {
    const std::vector<double> y = ar1_series(0.0, 0.6, 1.0, 2000, 41);
    const std::vector<double> p = arimax::pacf(y, 5);
    REQUIRE(p.size() == 5);
    CHECK(p[0] == doctest::Approx(0.6).epsilon(0.1));
    for (int k = 1; k < 5; ++k) CHECK(std::fabs(p[k]) < 0.08);
    // The first partial autocorrelation is the lag-1 autocorrelation.
    CHECK(p[0] == arimax::acf(y, 1)[0]);
}

TEST_CASE("unit root test separates random walks from stationary series") {
    CHECK_FALSE(arimax::unit_root_score(random_walk(300, 7)).stationary);
    CHECK(arimax::unit_root_score(ar1_series(0.0, 0.5, 1.0, 300, 7)).stationary);
    CHECK_THROWS(arimax::unit_root_score(std::vector<double>(19, 1.0)));
}

TEST_CASE("intercept-only fit is the exact sample mean and variance") {
    std::vector<double> x;
    for (int i = 1; i <= 12; ++i) x.push_back(i);
    const ArimaxFit f = arimax::fit(x, {}, ArimaxSpec{0, 0, 0, 0});
    CHECK(f.mu == doctest::Approx(6.5).epsilon(1e-12));
    CHECK(f.sigma2 == doctest::Approx(143.0 / 12.0).epsilon(1e-12));
    CHECK(f.aic ==
          doctest::Approx(12.0 * std::log(143.0 / 12.0) + 2.0).epsilon(1e-12));
    CHECK(f.converged);
    CHECK(f.ar_stationary);
}

TEST_CASE("css fit recovers an ARX(1) data generating process") {
    rng::Engine eng(4242);
    const int n = 2000;
    std::vector<double> x(n);
    for (double& v : x) v = eng.normal(0.0, 1.0);
    std::vector<double> y(n);
    y[0] = 0.5;
    for (int t = 1; t < n; ++t)
        y[t] = 0.2 + 0.6 * y[t - 1] + 0.8 * x[t] + eng.normal(0.0, 0.1);

    const ArimaxFit f = arimax::fit(y, {x}, ArimaxSpec{1, 0, 0, 1});
    CHECK(f.converged);
    CHECK(f.ar_stationary);
    CHECK(f.phi[0] == doctest::Approx(0.6).epsilon(0.1));
    CHECK(f.beta[0] == doctest::Approx(0.8).epsilon(0.1));
    CHECK(f.mu == doctest::Approx(0.2).epsilon(0.3));
    CHECK(f.sigma2 == doctest::Approx(0.01).epsilon(0.5));
}

TEST_CASE("css fit recovers an MA(1) data generating process") {
    rng::Engine eng(77);
    const int n = 2000;
    std::vector<double> e(n);
    for (double& v : e) v = eng.normal(0.0, 0.3);
    std::vector<double> y(n);
    y[0] = 0.1 + e[0];
    for (int t = 1; t < n; ++t) y[t] = 0.1 + e[t] + 0.5 * e[t - 1];

    const ArimaxFit f = arimax::fit(y, {}, ArimaxSpec{0, 0, 1, 0});
    CHECK(f.converged);
    CHECK(f.theta[0] == doctest::Approx(0.5).epsilon(0.2));
    CHECK(f.mu == doctest::Approx(0.1).epsilon(0.5));
}

TEST_CASE("fitting a random walk with a forced AR spec stays stationary") {
    const std::vector<double> y = random_walk(400, 3);
    const ArimaxFit f = arimax::fit(y, {}, ArimaxSpec{1, 0, 0, 0});
    CHECK(f.ar_stationary);
    CHECK(std::fabs(f.phi[0]) < 1.0);
}

TEST_CASE("fit validates its arguments") {
    std::vector<double> y(50, 0.0);
    for (int i = 0; i < 50; ++i) y[i] = std::sin(0.3 * i);
    CHECK_THROWS(arimax::fit(y, {}, ArimaxSpec{-1, 0, 0, 0}));
    CHECK_THROWS(arimax::fit(y, {}, ArimaxSpec{0, 3, 0, 0}));
    CHECK_THROWS(arimax::fit(y, {}, ArimaxSpec{0, 0, 0, 1}));  // missing exog
    CHECK_THROWS(arimax::fit(y, {std::vector<double>(49, 1.0)},
                             ArimaxSpec{0, 0, 0, 1}));
    CHECK_THROWS(arimax::fit({1, 2, 3}, {}, ArimaxSpec{1, 0, 0, 0}));
}

TEST_CASE("auto_order picks d by unit-root screening") {
    const ArimaxSpec stat = arimax::auto_order(
        ar1_series(0.0, 0.5, 1.0, 400, 11), {});
    CHECK(stat.d == 0);
    CHECK(stat.r == 0);
    CHECK(stat.p >= 0);
    CHECK(stat.p <= 3);
    CHECK(stat.q >= 0);
    CHECK(stat.q <= 3);

    const ArimaxSpec walk = arimax::auto_order(random_walk(400, 12), {});
    CHECK(walk.d == 1);
}

TEST_CASE("forecast applies the AR regression form exactly") {
    ArimaxFit f;
    f.spec = ArimaxSpec{1, 0, 0, 0};
    f.mu = 0.0;
    f.phi = {0.5};
    CHECK(arimax::forecast(f, {4.0, 2.0}, {}) == 1.0);
    f.mu = 0.3;
    CHECK(arimax::forecast(f, {4.0, 2.0}, {}) ==
          doctest::Approx(1.3).epsilon(1e-15));
}

TEST_CASE("forecast uses the trailing exogenous value") {
    ArimaxFit f;
    f.spec = ArimaxSpec{1, 0, 0, 1};
    f.mu = 0.0;
    f.phi = {0.5};
    f.beta = {0.5};
    // Exog column covers the one-point history plus the forecast instant.
    CHECK(arimax::forecast(f, {2.0}, {{1.0, 3.0}}) ==
          doctest::Approx(2.5).epsilon(1e-15));
    CHECK_THROWS(arimax::forecast(f, {2.0}, {{1.0}}));
    CHECK_THROWS(arimax::forecast(f, {2.0}, {}));
}

TEST_CASE("forecast runs the MA residual recursion over the history") {
    ArimaxFit f;
    f.spec = ArimaxSpec{0, 0, 1, 0};
    f.mu = 0.0;
    f.theta = {0.5};
    // e_0 = 1, e_1 = 2 - 0.5*1 = 1.5, forecast = 0.5 * 1.5.
    CHECK(arimax::forecast(f, {1.0, 2.0}, {}) ==
          doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("forecast reconstructs the level after differencing") {
    ArimaxFit f;
    f.spec = ArimaxSpec{0, 1, 0, 0};
    f.mu = 0.5;  // drift on the differenced scale
    CHECK(arimax::forecast(f, {3.0, 5.0}, {}) == 5.5);
    CHECK_THROWS(arimax::forecast(f, {3.0}, {}));  // history shorter than d
}

TEST_CASE("forecast clamps negative rates unless asked not to") {
    ArimaxFit f;
    f.spec = ArimaxSpec{1, 0, 0, 0};
    f.mu = 0.0;
    f.phi = {-2.0};
    CHECK(arimax::forecast(f, {0.0, 2.0}, {}, true) == 0.0);
    CHECK(arimax::forecast(f, {0.0, 2.0}, {}, false) ==
          doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("fit_report names the orders") {
    std::vector<double> x;
    for (int i = 1; i <= 12; ++i) x.push_back(0.5 * i * i);
    const ArimaxFit f = arimax::fit(x, {}, ArimaxSpec{0, 0, 0, 0});
    const std::string report = arimax::fit_report(f);
    CHECK(report.find("arimax(p=0,d=0,q=0,r=0)") != std::string::npos);
    CHECK(report.find("sigma2") != std::string::npos);
}
