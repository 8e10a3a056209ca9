#pragma once

// Per-link ARIMA(p,d,q) with exogenous regressors: differencing, ACF/PACF,
// Dickey-Fuller screening, conditional-sum-of-squares fitting via a simplex
// search, AIC order selection, and one-step forecasting.

#include <string>
#include <vector>

namespace ecoforecast::arimax {

struct ArimaxSpec {
    int p = 0;  // AR order
    int d = 0;  // differencing order, <= 2
    int q = 0;  // MA order
    int r = 0;  // exogenous regressor count

    bool operator==(const ArimaxSpec&) const = default;
};

struct ArimaxFit {
    ArimaxSpec spec;
    double mu = 0.0;
    std::vector<double> phi;    // p AR coefficients
    std::vector<double> theta;  // q MA coefficients
    std::vector<double> beta;   // r exogenous coefficients
    double sigma2 = 0.0;        // CSS residual variance
    double aic = 0.0;           // n*ln(sigma2) + 2*(p+q+r+1)
    bool ar_stationary = true;  // AR roots outside the unit circle
    bool converged = true;      // simplex met its tolerance within budget
};

/// d-th order forward differencing; output length shrinks by d.
std::vector<double> difference(const std::vector<double>& series, int d);

/// Left inverse of difference: rebuilds the original scale from the
/// differenced series and the first d original values.
std::vector<double> undifference(const std::vector<double>& diffed,
                                 const std::vector<double>& initial, int d);

/// Sample autocorrelations r_1..r_max_lag.
std::vector<double> acf(const std::vector<double>& series, int max_lag);

/// Partial autocorrelations phi_kk via Durbin-Levinson.
std::vector<double> pacf(const std::vector<double>& series, int max_lag);

struct UnitRootResult {
    double t_stat = 0.0;
    bool stationary = false;  // t_stat < -2.86 (5% constant-only DF value)
};

/// Dickey-Fuller regression of the first difference on the lagged level
/// with a constant. Requires length >= 20.
UnitRootResult unit_root_score(const std::vector<double>& series);

/// Minimizes the conditional sum of squared one-step errors on the
/// d-differenced scale (residuals before the recursion start are 0) with a
/// Nelder-Mead simplex from a least-squares start. exog columns are
/// differenced alongside the series and must match its length.
ArimaxFit fit(const std::vector<double>& series,
              const std::vector<std::vector<double>>& exog,
              const ArimaxSpec& spec);

/// d = smallest order in {0,1,2} whose differenced series the unit-root test
/// calls stationary (2 when none passes); (p,q) = AIC argmin over {0..3}^2.
ArimaxSpec auto_order(const std::vector<double>& series,
                      const std::vector<std::vector<double>>& exog);

/// One-step-ahead forecast after `history`. Each exog column must cover the
/// history and one extra trailing value (the regressors for the forecast
/// instant). Clamps at 0 g/s unless clamp is false.
double forecast(const ArimaxFit& fit, const std::vector<double>& history,
                const std::vector<std::vector<double>>& exog,
                bool clamp = true);

/// Human-readable fit summary: orders, coefficients, sigma2, AIC, flags.
std::string fit_report(const ArimaxFit& fit);

}  // namespace ecoforecast::arimax
