#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecoforecast/hyperopt.hpp"

using namespace ecoforecast;
using hyperopt::ParamSpec;
using hyperopt::Scale;
using hyperopt::SearchSpace;
using hyperopt::Trial;
using hyperopt::TrialStatus;

namespace {

SearchSpace quad_space() {
    SearchSpace space;
    space.params.push_back({"a", -5.0, 5.0, Scale::linear, false});
    space.params.push_back({"b", -5.0, 5.0, Scale::linear, false});
    return space;
}

double norm_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::acos(-1.0));
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("decode interpolates linear, log, and integer parameters") {
    SearchSpace space;
    space.params.push_back({"lr", 1e-4, 1e-1, Scale::log, false});
    space.params.push_back({"mom", 0.0, 10.0, Scale::linear, false});
    space.params.push_back({"units", 1.0, 8.0, Scale::linear, true});

    const std::vector<double> mid = hyperopt::decode({0.5, 0.25, 0.43}, space);
    REQUIRE(mid.size() == 3);
    // Log-scale midpoint: 10^(-2.5).
    CHECK(mid[0] == doctest::Approx(0.0031622776601683794).epsilon(1e-14));
    CHECK(mid[1] == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(mid[2] == 4.0);  // 1 + 0.43*7 = 4.01 rounds to 4

    const std::vector<double> lo = hyperopt::decode({0.0, 0.0, 0.0}, space);
    CHECK(lo[0] == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lo[1] == 0.0);
    CHECK(lo[2] == 1.0);
    const std::vector<double> hi = hyperopt::decode({1.0, 1.0, 1.0}, space);
    CHECK(hi[0] == doctest::Approx(1e-1).epsilon(1e-12));
    CHECK(hi[1] == 10.0);
    CHECK(hi[2] == 8.0);
}

TEST_CASE("decode rejects out-of-cube points and bad dimensions") {
    const SearchSpace space = quad_space();
    CHECK_THROWS(hyperopt::decode({0.5}, space));
    CHECK_THROWS(hyperopt::decode({-0.1, 0.5}, space));
    CHECK_THROWS(hyperopt::decode({0.5, 1.1}, space));
}

TEST_CASE("expected improvement matches the closed form") {
    // At mean == best with unit variance: EI = phi(0).
    CHECK(hyperopt::expected_improvement(0.0, 1.0, 0.0) ==
          doctest::Approx(0.3989422804014327).epsilon(1e-14));

    const double mean = 0.5;
    const double var = 0.04;
    const double best = 0.6;
    const double z = (best - mean) / std::sqrt(var);
    const double expected =
        (best - mean) * norm_cdf(z) + std::sqrt(var) * norm_pdf(z);
    CHECK(hyperopt::expected_improvement(mean, var, best) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("expected improvement handles the zero-variance limit") {
    CHECK(hyperopt::expected_improvement(1.0, 0.0, 3.0) == 2.0);
    CHECK(hyperopt::expected_improvement(3.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("expected improvement grows with uncertainty and never dips below zero") {
    CHECK(hyperopt::expected_improvement(0.0, 2.0, 0.0) >
          hyperopt::expected_improvement(0.0, 1.0, 0.0));
    CHECK(hyperopt::expected_improvement(5.0, 0.01, 0.0) >= 0.0);
}

TEST_CASE("gp posterior reverts to the prior far from the data") {
    std::vector<Trial> trials;
    trials.push_back({{0.05, 0.05}, {}, 1.0, TrialStatus::ok});
    trials.push_back({{0.1, 0.0}, {}, 2.0, TrialStatus::ok});
    const hyperopt::GpPosterior post =
        hyperopt::gp_posterior(trials, {{1.0, 1.0}});
    REQUIRE(post.mean.size() == 1);
    CHECK(std::fabs(post.mean[0]) < 1e-6);
    CHECK(post.variance[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gp posterior interpolates the standardized observations") {
    std::vector<Trial> trials;
    trials.push_back({{0.0, 0.0}, {}, 1.0, TrialStatus::ok});
    trials.push_back({{1.0, 1.0}, {}, 3.0, TrialStatus::ok});
    const hyperopt::GpPosterior post =
        hyperopt::gp_posterior(trials, {{0.0, 0.0}, {1.0, 1.0}});
    // Standardized objectives are -1 and +1; noise 1e-6 keeps the posterior
    // glued to them at the observed sites.
    CHECK(post.mean[0] == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(post.mean[1] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(post.variance[0] < 1e-3);
    CHECK(post.variance[1] < 1e-3);
}

TEST_CASE("gp posterior requires at least two trials") {
    std::vector<Trial> trials;
    trials.push_back({{0.5, 0.5}, {}, 1.0, TrialStatus::ok});
    CHECK_THROWS(hyperopt::gp_posterior(trials, {{0.0, 0.0}}));
}

TEST_CASE("optimize finds the minimum of a smooth quadratic") {
    const auto objective = [](const std::vector<double>& v) {
        return (v[0] - 1.0) * (v[0] - 1.0) + (v[1] + 2.0) * (v[1] + 2.0);
    };
    const hyperopt::OptimizeResult result =
        hyperopt::optimize(objective, quad_space(), 30, 7);
    CHECK(result.history.size() == 30);
    CHECK(result.best.status == TrialStatus::ok);
    CHECK(result.best.objective < 0.5);
    double best_seen = result.history.front().objective;
    for (const Trial& t : result.history) {
        best_seen = std::min(best_seen, t.objective);
        REQUIRE(t.values.size() == 2);
        CHECK(t.values == hyperopt::decode(t.point, quad_space()));
        for (double c : t.point) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
        }
    }
    CHECK(result.best.objective == best_seen);
}

TEST_CASE("a minimal budget runs the initial design only") {
    const auto objective = [](const std::vector<double>& v) { return v[0]; };
    const hyperopt::OptimizeResult result =
        hyperopt::optimize(objective, quad_space(), 4, 3);
    CHECK(result.history.size() == 4);
}

TEST_CASE("optimize is identical across job counts") {
    const auto objective = [](const std::vector<double>& v) {
        return std::sin(3.0 * v[0]) + v[1] * v[1];
    };
    const hyperopt::OptimizeResult serial =
        hyperopt::optimize(objective, quad_space(), 20, 5, 1);
    const hyperopt::OptimizeResult parallel =
        hyperopt::optimize(objective, quad_space(), 20, 5, 4);
    REQUIRE(serial.history.size() == parallel.history.size());
    for (std::size_t i = 0; i < serial.history.size(); ++i) {
        CHECK(serial.history[i].point == parallel.history[i].point);
        CHECK(serial.history[i].objective == parallel.history[i].objective);
    }
    CHECK(serial.best.point == parallel.best.point);
}

TEST_CASE("throwing objectives are recorded as failed trials") {
    const auto objective = [](const std::vector<double>& v) {
        if (v[0] < 0.0) throw std::runtime_error("left half fails");
        return v[0] + std::fabs(v[1]);
    };
    const hyperopt::OptimizeResult result =
        hyperopt::optimize(objective, quad_space(), 25, 11);
    bool saw_failed = false;
    for (const Trial& t : result.history) {
        if (t.status == TrialStatus::failed) {
            saw_failed = true;
            CHECK(t.objective > 0.0);
        }
    }
    CHECK(saw_failed);
    CHECK(result.best.status == TrialStatus::ok);
    CHECK(result.best.values[0] >= 0.0);
}

TEST_CASE("optimize throws when every trial fails") {
    const auto objective = [](const std::vector<double>&) -> double {
        throw std::runtime_error("always fails");
    };
    CHECK_THROWS(hyperopt::optimize(objective, quad_space(), 6, 2));
}

TEST_CASE("preset spaces expose the documented parameters") {
    for (const std::string& name : {std::string("manual"), std::string("narrow")}) {
        const SearchSpace one = hyperopt::preset_space(name, false);
        CHECK(one.dim() == 6);
        const SearchSpace two = hyperopt::preset_space(name, true);
        CHECK(two.dim() == 7);
        std::vector<std::string> names;
        for (const ParamSpec& p : two.params) names.push_back(p.name);
        for (const char* expected :
             {"initial_learning_rate", "momentum", "max_epochs",
              "lr_drop_factor", "lr_drop_period", "hidden_units_layer1",
              "hidden_units_layer2"})
            CHECK(std::find(names.begin(), names.end(), expected) !=
                  names.end());
    }
    CHECK_THROWS(hyperopt::preset_space("wide", false));

    // The narrow space brackets a subset of the manual one.
    const SearchSpace manual = hyperopt::preset_space("manual", false);
    const SearchSpace narrow = hyperopt::preset_space("narrow", false);
    for (std::size_t i = 0; i < manual.params.size(); ++i) {
        CHECK(narrow.params[i].name == manual.params[i].name);
        CHECK(narrow.params[i].lower >= manual.params[i].lower);
        CHECK(narrow.params[i].upper <= manual.params[i].upper);
    }
}

TEST_CASE("trials export one csv row per trial") {
    SearchSpace space;
    space.params.push_back({"lr", 0.001, 0.1, Scale::log, false});
    space.params.push_back({"units", 4.0, 32.0, Scale::linear, true});
    std::vector<Trial> trials;
    trials.push_back({{0.0, 0.0}, {0.001, 4.0}, 0.5, TrialStatus::ok});
    trials.push_back({{1.0, 1.0}, {0.1, 32.0}, 1.5, TrialStatus::failed});
    const std::string csv = hyperopt::trials_to_csv(space, trials);
    CHECK(csv.rfind("trial,lr,units,rmse,status\n", 0) == 0);
    CHECK(csv.find("ok") != std::string::npos);
    CHECK(csv.find("failed") != std::string::npos);
    CHECK(csv.find("0.001") != std::string::npos);
}
