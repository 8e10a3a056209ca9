#include "ecoforecast/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ecoforecast/io.hpp"
#include "ecoforecast/parallel.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast::hyperopt {

namespace {

constexpr double kLengthScale = 0.2;
constexpr double kNoise = 1e-6;
constexpr int kCandidates = 2048;

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("hyperopt: " + msg);
}

double norm_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double se_kernel(const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * kLengthScale * kLengthScale));
}

// In-place lower Cholesky; false on a non-positive pivot.
bool cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
        if (diag <= 0.0) return false;
        const double root = std::sqrt(diag);
        a[j * n + j] = root;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k)
                v -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = v / root;
        }
    }
    return true;
}

void solve_lower(const std::vector<double>& l, std::size_t n,
                 std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= l[i * n + k] * b[k];
        b[i] = v / l[i * n + i];
    }
}

void solve_upper_t(const std::vector<double>& l, std::size_t n,
                   std::vector<double>& b) {
    for (std::size_t i = n; i-- > 0;) {
        double v = b[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= l[k * n + i] * b[k];
        b[i] = v / l[i * n + i];
    }
}

struct GpModel {
    std::vector<std::vector<double>> points;
    std::vector<double> chol;   // lower factor of K + (noise+jitter) I
    std::vector<double> alpha;  // (K + nI)^-1 z
    double obj_mean = 0.0;
    double obj_sd = 1.0;
    std::size_t n = 0;
};

GpModel build_gp(const std::vector<Trial>& trials) {
    if (trials.size() < 2) fail("gp needs at least two trials");
    GpModel gp;
    gp.n = trials.size();
    for (const Trial& t : trials) gp.points.push_back(t.point);

    double mean = 0.0;
    for (const Trial& t : trials) mean += t.objective;
    mean /= gp.n;
    double var = 0.0;
    for (const Trial& t : trials)
        var += (t.objective - mean) * (t.objective - mean);
    var /= gp.n;
    gp.obj_mean = mean;
    gp.obj_sd = var > 0.0 ? std::sqrt(var) : 1.0;

    std::vector<double> base(gp.n * gp.n);
    for (std::size_t i = 0; i < gp.n; ++i)
        for (std::size_t j = 0; j < gp.n; ++j)
            base[i * gp.n + j] = se_kernel(gp.points[i], gp.points[j]);

    const double jitters[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
    bool ok = false;
    for (double jitter : jitters) {
        gp.chol = base;
        for (std::size_t i = 0; i < gp.n; ++i)
            gp.chol[i * gp.n + i] += kNoise + jitter;
        if (cholesky(gp.chol, gp.n)) {
            ok = true;
            break;
        }
    }
    if (!ok) fail("irrecoverably singular kernel matrix");

    gp.alpha.resize(gp.n);
    for (std::size_t i = 0; i < gp.n; ++i)
        gp.alpha[i] = (trials[i].objective - gp.obj_mean) / gp.obj_sd;
    solve_lower(gp.chol, gp.n, gp.alpha);
    solve_upper_t(gp.chol, gp.n, gp.alpha);
    return gp;
}

void gp_query(const GpModel& gp, const std::vector<double>& q, double& mean,
              double& variance) {
    std::vector<double> kstar(gp.n);
    for (std::size_t i = 0; i < gp.n; ++i)
        kstar[i] = se_kernel(gp.points[i], q);
    double m = 0.0;
    for (std::size_t i = 0; i < gp.n; ++i) m += kstar[i] * gp.alpha[i];
    std::vector<double> v = kstar;
    solve_lower(gp.chol, gp.n, v);
    double reduction = 0.0;
    for (std::size_t i = 0; i < gp.n; ++i) reduction += v[i] * v[i];
    mean = m;
    variance = std::max(0.0, 1.0 - reduction);
}

}  // namespace

SearchSpace preset_space(const std::string& name, bool two_layers) {
    SearchSpace s;
    if (name == "manual") {
        s.params = {
            {"initial_learning_rate", 1e-4, 1e-1, Scale::log, false},
            {"momentum", 0.5, 0.99, Scale::linear, false},
            {"max_epochs", 10, 120, Scale::linear, true},
            {"lr_drop_factor", 0.1, 0.9, Scale::linear, false},
            {"lr_drop_period", 5, 50, Scale::linear, true},
            {"hidden_units_layer1", 8, 128, Scale::linear, true},
        };
        if (two_layers)
            s.params.push_back(
                {"hidden_units_layer2", 8, 128, Scale::linear, true});
        return s;
    }
    if (name == "narrow") {
        s.params = {
            {"initial_learning_rate", 3e-3, 3e-2, Scale::log, false},
            {"momentum", 0.85, 0.95, Scale::linear, false},
            {"max_epochs", 20, 60, Scale::linear, true},
            {"lr_drop_factor", 0.3, 0.7, Scale::linear, false},
            {"lr_drop_period", 8, 20, Scale::linear, true},
            {"hidden_units_layer1", 16, 64, Scale::linear, true},
        };
        if (two_layers)
            s.params.push_back(
                {"hidden_units_layer2", 16, 64, Scale::linear, true});
        return s;
    }
    fail("unknown search space '" + name + "' (expected manual or narrow)");
}

std::vector<double> decode(const std::vector<double>& point,
                           const SearchSpace& space) {
    if (point.size() != space.dim())
        fail("point dimension does not match the search space");
    std::vector<double> out(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double t = point[i];
        if (!(t >= 0.0 && t <= 1.0)) fail("coordinate outside the unit cube");
        const ParamSpec& p = space.params[i];
        double v;
        if (p.scale == Scale::log) {
            if (p.lower <= 0.0) fail("log-scale bounds must be positive");
            const double lg =
                std::log10(p.lower) +
                t * (std::log10(p.upper) - std::log10(p.lower));
            v = std::pow(10.0, lg);
        } else {
            v = p.lower + t * (p.upper - p.lower);
        }
        if (p.integer) v = static_cast<double>(std::llround(v));
        out[i] = v;
    }
    return out;
}

GpPosterior gp_posterior(const std::vector<Trial>& trials,
                         const std::vector<std::vector<double>>& queries) {
    const GpModel gp = build_gp(trials);
    GpPosterior post;
    post.mean.resize(queries.size());
    post.variance.resize(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        gp_query(gp, queries[i], post.mean[i], post.variance[i]);
    return post;
}

double expected_improvement(double mean, double variance, double best_so_far) {
    if (variance < 0.0) fail("negative variance");
    const double gap = best_so_far - mean;
    if (variance == 0.0) return std::max(0.0, gap);
    const double sigma = std::sqrt(variance);
    const double z = gap / sigma;
    const double ei = gap * norm_cdf(z) + sigma * norm_pdf(z);
    return std::max(0.0, ei);
}

OptimizeResult optimize(
    const std::function<double(const std::vector<double>&)>& objective,
    const SearchSpace& space, int budget, std::uint64_t seed, int jobs) {
    if (budget < 4) fail("budget must be at least 4");
    if (space.dim() == 0) fail("empty search space");
    const std::size_t dim = space.dim();
    const int n_init = std::max(4, budget / 5);

    // Latin hypercube: per dimension, one point per stratum in shuffled
    // stratum order.
    std::vector<std::vector<double>> init_points(
        n_init, std::vector<double>(dim));
    {
        rng::Engine eng(rng::derive_seed(seed, "lhs_init", 0));
        std::vector<int> strata(n_init);
        for (std::size_t d = 0; d < dim; ++d) {
            for (int i = 0; i < n_init; ++i) strata[i] = i;
            eng.shuffle(strata);
            for (int i = 0; i < n_init; ++i)
                init_points[i][d] =
                    (strata[i] + eng.uniform01()) / n_init;
        }
    }

    std::vector<Trial> history(n_init);
    const auto run_trial = [&](const std::vector<double>& point) {
        Trial t;
        t.point = point;
        t.values = decode(point, space);
        try {
            t.objective = objective(t.values);
            if (!std::isfinite(t.objective))
                throw std::runtime_error("non-finite objective");
            t.status = TrialStatus::ok;
        } catch (const std::exception&) {
            t.status = TrialStatus::failed;
        }
        return t;
    };
    parallel_for(n_init, jobs, [&](std::size_t i) {
        history[i] = run_trial(init_points[i]);
    });
    // Penalties are filled in submission order so the sequence matches a
    // sequential run regardless of jobs.
    double worst = -1.0;
    bool any_ok = false;
    for (Trial& t : history) {
        if (t.status == TrialStatus::ok) {
            worst = any_ok ? std::max(worst, t.objective) : t.objective;
            any_ok = true;
        } else {
            t.objective = any_ok ? worst * 1.5 : 1.0;
        }
    }

    for (int step = n_init; step < budget; ++step) {
        double best = history[0].objective;
        for (const Trial& t : history) best = std::min(best, t.objective);

        const GpModel gp = build_gp(history);
        const double best_std = (best - gp.obj_mean) / gp.obj_sd;

        rng::Engine eng(rng::derive_seed(seed, "ei_candidates",
                                         static_cast<std::uint64_t>(step)));
        std::vector<double> cand(dim);
        std::vector<double> best_cand;
        double best_ei = -1.0;
        for (int c = 0; c < kCandidates; ++c) {
            for (std::size_t d = 0; d < dim; ++d) cand[d] = eng.uniform01();
            double mean, variance;
            gp_query(gp, cand, mean, variance);
            const double ei = expected_improvement(mean, variance, best_std);
            if (ei > best_ei) {
                best_ei = ei;
                best_cand = cand;
            }
        }

        Trial t = run_trial(best_cand);
        if (t.status == TrialStatus::ok) {
            worst = any_ok ? std::max(worst, t.objective) : t.objective;
            any_ok = true;
        } else {
            t.objective = any_ok ? worst * 1.5 : 1.0;
        }
        history.push_back(std::move(t));
    }

    if (!any_ok) fail("all trials failed");
    std::size_t best_i = 0;
    bool found = false;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].status != TrialStatus::ok) continue;
        if (!found || history[i].objective < history[best_i].objective) {
            best_i = i;
            found = true;
        }
    }
    return {history[best_i], history};
}

std::string trials_to_csv(const SearchSpace& space,
                          const std::vector<Trial>& trials) {
    std::string out = "trial";
    for (const ParamSpec& p : space.params) out += "," + p.name;
    out += ",rmse,status\n";
    for (std::size_t i = 0; i < trials.size(); ++i) {
        out += std::to_string(i);
        for (double v : trials[i].values) out += "," + io::fmt_double(v);
        out += "," + io::fmt_double(trials[i].objective);
        out += trials[i].status == TrialStatus::ok ? ",ok\n" : ",failed\n";
    }
    return out;
}

}  // namespace ecoforecast::hyperopt
