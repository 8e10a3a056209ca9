#pragma once

// Bayesian hyperparameter search: Latin-hypercube initialization, a
// Gaussian-process surrogate on the unit cube, and expected-improvement
// proposals, plus named search-space presets for the two tuning stages.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ecoforecast::hyperopt {

enum class Scale { linear, log };

struct ParamSpec {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
    Scale scale = Scale::linear;
    bool integer = false;
};

struct SearchSpace {
    std::vector<ParamSpec> params;
    std::size_t dim() const { return params.size(); }
};

/// Named spaces over initial_learning_rate, momentum, max_epochs,
/// lr_drop_factor, lr_drop_period, and hidden unit counts. "manual" uses
/// wide first-stage ranges; "narrow" brackets typical winners of the manual
/// stage. two_layers adds hidden_units_layer2.
SearchSpace preset_space(const std::string& name, bool two_layers);

enum class TrialStatus { ok, failed };

struct Trial {
    std::vector<double> point;   // unit-cube coordinates
    std::vector<double> values;  // decoded parameters, space order
    double objective = 0.0;      // validation RMSE g/s; penalty when failed
    TrialStatus status = TrialStatus::ok;
};

/// Interpolates each coordinate between its bounds (log scale interpolates
/// the exponent); integer parameters round to nearest. Coordinates must lie
/// in [0,1].
std::vector<double> decode(const std::vector<double>& point,
                           const SearchSpace& space);

struct GpPosterior {
    std::vector<double> mean;      // standardized-objective scale
    std::vector<double> variance;  // prior variance 1 far from data
};

/// Exact zero-mean GP regression on standardized trial objectives:
/// squared-exponential kernel with length scale 0.2 in unit-cube
/// coordinates, observation-noise variance 1e-6, Cholesky factorization
/// with jitter escalated from 1e-10 to 1e-6 when needed. Requires at least
/// two trials.
GpPosterior gp_posterior(const std::vector<Trial>& trials,
                         const std::vector<std::vector<double>>& queries);

/// Expected improvement below best_so_far for a minimization problem:
/// (best-mean)*Phi(z) + sigma*phi(z) with z = (best-mean)/sigma, and
/// max(0, best-mean) in the zero-variance limit.
double expected_improvement(double mean, double variance, double best_so_far);

struct OptimizeResult {
    Trial best;
    std::vector<Trial> history;
};

/// Runs max(4, budget/5) Latin-hypercube trials, then fills the budget by
/// maximizing EI over 2048 seeded uniform candidates per step. An objective
/// that throws records a failed trial at 1.5x the worst objective so far
/// (1.0 when nothing has succeeded yet). Throws when every trial failed.
/// jobs > 1 evaluates the initial batch in parallel; the result is
/// identical to the sequential run.
OptimizeResult optimize(
    const std::function<double(const std::vector<double>&)>& objective,
    const SearchSpace& space, int budget, std::uint64_t seed, int jobs = 1);

/// CSV rows: trial,<param names...>,rmse,status.
std::string trials_to_csv(const SearchSpace& space,
                          const std::vector<Trial>& trials);

}  // namespace ecoforecast::hyperopt
