#pragma once

// Performance indicators (Pearson r, coefficient of determination, RMSE,
// through-origin fit slope) and the multi-model comparison report.

#include <string>
#include <vector>

namespace ecoforecast {

struct Metrics {
    double pearson_r = 0.0;
    double r2 = 0.0;        // coefficient of determination, 1 - SSres/SStot
    double r2_squared_corr = 0.0;  // pearson_r^2, emitted in verbose reports
    double rmse = 0.0;      // g/s
    double fit_slope = 0.0; // least-squares slope of y_pred = a * y_true
    long n = 0;
    // False when y_true has zero variance; pearson_r/r2 are then meaningless.
    bool correlation_defined = true;
};

/// Computes all indicators over an aligned pair of series. Throws on length
/// mismatch or fewer than 2 points. fit_slope uses y_true as the abscissa,
/// so slope < 1 reads as underestimation.
Metrics evaluate(const std::vector<double>& y_true,
                 const std::vector<double>& y_pred);

struct ModelPredictions {
    std::string name;
    std::string cohort;  // models in one cohort must share y_true exactly
    std::vector<double> y_true;
    std::vector<double> y_pred;
};

struct CompareRow {
    std::string name;
    std::string cohort;
    Metrics metrics;
    // (rmse - best competitor rmse) / best competitor rmse, in percent;
    // NaN when the cohort has no other model.
    double rmse_delta_pct = 0.0;
};

/// Scores every model and computes relative-RMSE deltas within each cohort.
/// Models in the same cohort must have identical y_true vectors.
std::vector<CompareRow> compare(const std::vector<ModelPredictions>& models);

/// Text table over compare() rows; verbose adds the squared-correlation
/// variant of R^2.
std::string compare_report(const std::vector<CompareRow>& rows,
                           bool verbose = false);

std::string compare_rows_to_csv(const std::vector<CompareRow>& rows);

/// Two-column scatter data (`y_true,y_pred`) for external plotting.
std::string scatter_csv(const std::vector<double>& y_true,
                        const std::vector<double>& y_pred);

}  // namespace ecoforecast
