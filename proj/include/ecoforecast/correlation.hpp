#pragma once

// Lagged Pearson correlation between candidate predictors over a 6-interval
// window: each variable at positions 1..5 against GHG ER at position 6,
// pooled over all links and scenarios.

#include <string>
#include <vector>

#include "ecoforecast/features.hpp"

namespace ecoforecast {

/// Product-moment correlation. Throws on length mismatch, length < 2, or
/// zero variance in either input.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct LagCell {
    std::string variable;
    int lag = 0;  // window position 1..window-1
    double r = 0.0;
    long n = 0;

    bool operator==(const LagCell&) const = default;
};

struct LagCorrelationMatrix {
    int window = 6;
    std::vector<LagCell> cells;  // zero-variance cells are omitted
    long window_count = 0;
    bool low_sample_warning = false;  // fewer than 30 windows
};

/// Correlates each variable at window positions 1..window-1 with GHG ER at
/// the final position. Windows never bridge scenarios or t_index gaps.
LagCorrelationMatrix lag_matrix(const std::vector<LinkIntervalRecord>& rows,
                                const std::vector<std::string>& variables,
                                int window = 6);

/// Variables ordered by descending max |r| over their lags; ties break
/// alphabetically. Variables with no computable cell are excluded.
std::vector<std::string> rank_predictors(const LagCorrelationMatrix& matrix);

std::string lag_matrix_to_csv(const LagCorrelationMatrix& matrix);
LagCorrelationMatrix lag_matrix_from_csv(const std::string& text);

/// Human-readable ranking report (one variable per line with its max |r|).
std::string rank_report(const LagCorrelationMatrix& matrix);

}  // namespace ecoforecast
