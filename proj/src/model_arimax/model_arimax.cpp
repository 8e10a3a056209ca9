#include "ecoforecast/model_arimax.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "ecoforecast/io.hpp"

namespace ecoforecast::arimax {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("arimax: " + msg);
}

// Gaussian elimination with partial pivoting for the small OLS systems.
// Returns false on a (near-)singular matrix.
bool solve_linear(std::vector<std::vector<double>> a, std::vector<double> b,
                  std::vector<double>& x) {
    const std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t row = col + 1; row < n; ++row)
            if (std::fabs(a[row][col]) > std::fabs(a[pivot][col])) pivot = row;
        if (std::fabs(a[pivot][col]) < 1e-12) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t row = col + 1; row < n; ++row) {
            const double m = a[row][col] / a[col][col];
            for (std::size_t k = col; k < n; ++k) a[row][k] -= m * a[col][k];
            b[row] -= m * b[col];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= a[i][k] * x[k];
        x[i] = acc / a[i][i];
    }
    return true;
}

// Parameter packing for the CSS objective: [mu, phi..., theta..., beta...].
struct Packed {
    const ArimaxSpec& spec;
    double mu(const std::vector<double>& v) const { return v[0]; }
    double phi(const std::vector<double>& v, int i) const { return v[1 + i]; }
    double theta(const std::vector<double>& v, int j) const {
        return v[1 + spec.p + j];
    }
    double beta(const std::vector<double>& v, int k) const {
        return v[1 + spec.p + spec.q + k];
    }
    std::size_t size() const {
        return 1 + static_cast<std::size_t>(spec.p + spec.q + spec.r);
    }
};

// One-step CSS residuals on the differenced scale. w is the differenced
// series, z the differenced exog columns. Residuals for t < p are treated as
// zero; the recursion runs over t = p..n-1.
double css_objective(const std::vector<double>& params, const Packed& pk,
                     const std::vector<double>& w,
                     const std::vector<std::vector<double>>& z,
                     std::vector<double>* residuals_out) {
    const int n = static_cast<int>(w.size());
    const int p = pk.spec.p;
    const int q = pk.spec.q;
    const int r = pk.spec.r;
    std::vector<double> e(n, 0.0);
    double ss = 0.0;
    for (int t = p; t < n; ++t) {
        double pred = pk.mu(params);
        for (int i = 0; i < p; ++i) pred += pk.phi(params, i) * w[t - 1 - i];
        for (int k = 0; k < r; ++k) pred += pk.beta(params, k) * z[k][t];
        for (int j = 0; j < q; ++j) {
            const int s = t - 1 - j;
            if (s >= p) pred += pk.theta(params, j) * e[s];
        }
        e[t] = w[t] - pred;
        ss += e[t] * e[t];
    }
    if (residuals_out) *residuals_out = std::move(e);
    return ss;
}

struct SimplexResult {
    std::vector<double> x;
    double f = 0.0;
    bool converged = false;
};

// Nelder-Mead with standard coefficients; deterministic initial simplex.
template <typename F>
SimplexResult nelder_mead(std::vector<double> x0, F func, int max_iter) {
    const std::size_t dim = x0.size();
    std::vector<std::vector<double>> verts;
    std::vector<double> fv;
    verts.push_back(x0);
    for (std::size_t i = 0; i < dim; ++i) {
        std::vector<double> v = x0;
        v[i] += 0.05 + 0.1 * std::fabs(v[i]);
        verts.push_back(std::move(v));
    }
    for (const auto& v : verts) fv.push_back(func(v));

    std::vector<std::size_t> order(verts.size());
    const auto sort_verts = [&] {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    };

    bool converged = false;
    for (int iter = 0; iter < max_iter; ++iter) {
        sort_verts();
        const double f_best = fv[order.front()];
        const double f_worst = fv[order.back()];
        if (f_worst - f_best <= 1e-12 * (1.0 + std::fabs(f_best))) {
            converged = true;
            break;
        }
        const std::size_t worst = order.back();
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i : order) {
            if (i == worst) continue;
            for (std::size_t k = 0; k < dim; ++k) centroid[k] += verts[i][k];
        }
        for (double& c : centroid) c /= static_cast<double>(dim);

        const auto blend = [&](double coef) {
            std::vector<double> v(dim);
            for (std::size_t k = 0; k < dim; ++k)
                v[k] = centroid[k] + coef * (verts[worst][k] - centroid[k]);
            return v;
        };
        const std::vector<double> reflected = blend(-1.0);
        const double f_r = func(reflected);
        const double f_second_worst = fv[order[order.size() - 2]];
        if (f_r < f_best) {
            const std::vector<double> expanded = blend(-2.0);
            const double f_e = func(expanded);
            if (f_e < f_r) {
                verts[worst] = expanded;
                fv[worst] = f_e;
            } else {
                verts[worst] = reflected;
                fv[worst] = f_r;
            }
        } else if (f_r < f_second_worst) {
            verts[worst] = reflected;
            fv[worst] = f_r;
        } else {
            const std::vector<double> contracted =
                blend(f_r < fv[worst] ? -0.5 : 0.5);
            const double f_c = func(contracted);
            if (f_c < std::min(f_r, fv[worst])) {
                verts[worst] = contracted;
                fv[worst] = f_c;
            } else {
                const std::size_t best = order.front();
                for (std::size_t i = 0; i < verts.size(); ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < dim; ++k)
                        verts[i][k] =
                            verts[best][k] + 0.5 * (verts[i][k] - verts[best][k]);
                    fv[i] = func(verts[i]);
                }
            }
        }
    }
    sort_verts();
    return {verts[order.front()], fv[order.front()], converged};
}

// Largest root magnitude of 1 - phi_1 z - ... - phi_p z^p must exceed 1 for
// stationarity. Durand-Kerner on the reversed polynomial.
bool ar_roots_outside_unit_circle(const std::vector<double>& phi) {
    // Strip trailing zero coefficients; an empty polynomial is stationary.
    int p = static_cast<int>(phi.size());
    while (p > 0 && phi[p - 1] == 0.0) --p;
    if (p == 0) return true;
    // Polynomial c_0 + c_1 z + ... + c_p z^p with c_0 = 1, c_i = -phi_i.
    std::vector<std::complex<double>> c(p + 1);
    c[0] = 1.0;
    for (int i = 1; i <= p; ++i) c[i] = -phi[i - 1];
    // Normalize to monic for the iteration.
    for (int i = 0; i <= p; ++i) c[i] /= c[p];
    std::vector<std::complex<double>> roots(p);
    const std::complex<double> seed(0.4, 0.9);
    std::complex<double> acc = 1.0;
    for (int i = 0; i < p; ++i) {
        acc *= seed;
        roots[i] = acc;
    }
    const auto eval = [&](std::complex<double> z) {
        std::complex<double> v = 0.0;
        for (int i = p; i >= 0; --i) v = v * z + c[i];
        return v;
    };
    for (int iter = 0; iter < 200; ++iter) {
        double moved = 0.0;
        for (int i = 0; i < p; ++i) {
            std::complex<double> denom = 1.0;
            for (int j = 0; j < p; ++j)
                if (j != i) denom *= roots[i] - roots[j];
            const std::complex<double> delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = std::max(moved, std::abs(delta));
        }
        if (moved < 1e-12) break;
    }
    for (const auto& root : roots)
        if (std::abs(root) <= 1.0 + 1e-9) return false;
    return true;
}

}  // namespace

std::vector<double> difference(const std::vector<double>& series, int d) {
    if (d < 0) fail("negative differencing order");
    if (static_cast<int>(series.size()) <= d)
        fail("series too short to difference");
    std::vector<double> out = series;
    for (int round = 0; round < d; ++round) {
        std::vector<double> next(out.size() - 1);
        for (std::size_t i = 0; i + 1 < out.size(); ++i)
            next[i] = out[i + 1] - out[i];
        out = std::move(next);
    }
    return out;
}

std::vector<double> undifference(const std::vector<double>& diffed,
                                 const std::vector<double>& initial, int d) {
    if (static_cast<int>(initial.size()) < d)
        fail("undifference needs d initial values");
    if (d == 0) return diffed;
    // Reconstruct by integrating one order at a time, innermost first.
    // Initial values for order k are the (d-k)-times differenced prefix.
    std::vector<std::vector<double>> prefixes(d);
    prefixes[0] = std::vector<double>(initial.begin(), initial.begin() + d);
    for (int k = 1; k < d; ++k) prefixes[k] = difference(prefixes[k - 1], 1);
    std::vector<double> acc = diffed;
    for (int k = d - 1; k >= 0; --k) {
        // prefixes[k] has length d-k; acc is the once-more-differenced tail.
        std::vector<double> rebuilt;
        rebuilt.reserve(prefixes[k].size() + acc.size());
        rebuilt.insert(rebuilt.end(), prefixes[k].begin(), prefixes[k].end());
        double cur = rebuilt.back();
        for (double dv : acc) {
            cur += dv;
            rebuilt.push_back(cur);
        }
        // Drop the prefix part that belongs to the initial values of the
        // next outer order, keeping alignment: at the outermost level the
        // full series is returned.
        if (k > 0) {
            acc.assign(rebuilt.begin() + (d - k), rebuilt.end());
        } else {
            acc = std::move(rebuilt);
        }
    }
    return acc;
}

std::vector<double> acf(const std::vector<double>& series, int max_lag) {
    const int n = static_cast<int>(series.size());
    if (n <= max_lag + 1) fail("series too short for requested lags");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= n;
    double denom = 0.0;
    for (double v : series) denom += (v - mean) * (v - mean);
    if (denom == 0.0) fail("zero variance");
    std::vector<double> out(max_lag);
    for (int k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (int t = k; t < n; ++t)
            num += (series[t] - mean) * (series[t - k] - mean);
        out[k - 1] = num / denom;
    }
    return out;
}

std::vector<double> pacf(const std::vector<double>& series, int max_lag) {
    const std::vector<double> rho = acf(series, max_lag);
    // Durbin-Levinson: phi[k][k] is the k-th partial autocorrelation.
    std::vector<double> out(max_lag, 0.0);
    std::vector<double> prev(max_lag + 1, 0.0);
    std::vector<double> cur(max_lag + 1, 0.0);
    for (int k = 1; k <= max_lag; ++k) {
        if (k == 1) {
            cur[1] = rho[0];
        } else {
            double num = rho[k - 1];
            double den = 1.0;
            for (int j = 1; j < k; ++j) {
                num -= prev[j] * rho[k - 1 - j];
                den -= prev[j] * rho[j - 1];
            }
            if (std::fabs(den) < 1e-14) fail("degenerate Durbin-Levinson step");
            cur[k] = num / den;
            for (int j = 1; j < k; ++j)
                cur[j] = prev[j] - cur[k] * prev[k - j];
        }
        out[k - 1] = cur[k];
        prev = cur;
    }
    return out;
}

UnitRootResult unit_root_score(const std::vector<double>& series) {
    const int n = static_cast<int>(series.size());
    if (n < 20) fail("unit-root test needs at least 20 points");
    // Regress dy_t = alpha + gamma*y_{t-1} + eps over t = 1..n-1.
    const int m = n - 1;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int t = 1; t < n; ++t) {
        const double x = series[t - 1];
        const double y = series[t] - series[t - 1];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double det = m * sxx - sx * sx;
    if (std::fabs(det) < 1e-12) fail("degenerate unit-root regression");
    const double gamma = (m * sxy - sx * sy) / det;
    const double alpha = (sy - gamma * sx) / m;
    double ss = 0.0;
    for (int t = 1; t < n; ++t) {
        const double x = series[t - 1];
        const double resid = (series[t] - series[t - 1]) - alpha - gamma * x;
        ss += resid * resid;
    }
    const double sigma2 = ss / (m - 2);
    const double se_gamma = std::sqrt(sigma2 * m / det);
    UnitRootResult out;
    out.t_stat = gamma / se_gamma;
    out.stationary = out.t_stat < -2.86;
    return out;
}

ArimaxFit fit(const std::vector<double>& series,
              const std::vector<std::vector<double>>& exog,
              const ArimaxSpec& spec) {
    if (spec.p < 0 || spec.q < 0 || spec.d < 0 || spec.r < 0)
        fail("negative order");
    if (spec.d > 2) fail("differencing order above 2");
    if (static_cast<int>(exog.size()) != spec.r)
        fail("exog column count does not match spec.r");
    for (const auto& col : exog)
        if (col.size() != series.size())
            fail("exog column length does not match the series");

    const std::vector<double> w = difference(series, spec.d);
    std::vector<std::vector<double>> z;
    z.reserve(exog.size());
    for (const auto& col : exog) z.push_back(difference(col, spec.d));
    const int n = static_cast<int>(w.size());
    const int n_params = spec.p + spec.q + spec.r + 1;
    if (n <= 10 * n_params)
        fail("series too short after differencing (need > 10 per parameter)");

    const Packed pk{spec};
    ArimaxFit out;
    out.spec = spec;

    if (spec.p == 0 && spec.q == 0 && spec.r == 0) {
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= n;
        double ss = 0.0;
        for (double v : w) ss += (v - mean) * (v - mean);
        out.mu = mean;
        out.sigma2 = ss / n;
        out.aic =
            n * std::log(std::max(out.sigma2, 1e-300)) + 2.0 * n_params;
        return out;
    }

    // OLS start: regress w_t on [1, w lags, z_t], MA terms start at zero.
    std::vector<double> start(pk.size(), 0.0);
    {
        const int dim = 1 + spec.p + spec.r;
        std::vector<std::vector<double>> xtx(
            dim, std::vector<double>(dim, 0.0));
        std::vector<double> xty(dim, 0.0);
        for (int t = spec.p; t < n; ++t) {
            std::vector<double> row(dim);
            row[0] = 1.0;
            for (int i = 0; i < spec.p; ++i) row[1 + i] = w[t - 1 - i];
            for (int k = 0; k < spec.r; ++k) row[1 + spec.p + k] = z[k][t];
            for (int a = 0; a < dim; ++a) {
                xty[a] += row[a] * w[t];
                for (int b = 0; b < dim; ++b) xtx[a][b] += row[a] * row[b];
            }
        }
        std::vector<double> sol;
        if (solve_linear(xtx, xty, sol)) {
            start[0] = sol[0];
            for (int i = 0; i < spec.p; ++i) start[1 + i] = sol[1 + i];
            for (int k = 0; k < spec.r; ++k)
                start[1 + spec.p + spec.q + k] = sol[1 + spec.p + k];
        }
        // A near-unit-root series can put the OLS coefficients outside the
        // stationary region; shrink them back so the search starts feasible.
        if (spec.p > 0) {
            std::vector<double> phi(start.begin() + 1,
                                    start.begin() + 1 + spec.p);
            for (int round = 0;
                 round < 200 && !ar_roots_outside_unit_circle(phi); ++round)
                for (double& c : phi) c *= 0.9;
            std::copy(phi.begin(), phi.end(), start.begin() + 1);
        }
    }

    const auto objective = [&](const std::vector<double>& v) {
        // Outside the stationary/invertible region the residual recursion
        // diverges, and so would any forecast built on it; wall it off.
        if (spec.p > 0) {
            std::vector<double> phi(spec.p);
            for (int i = 0; i < spec.p; ++i) phi[i] = pk.phi(v, i);
            if (!ar_roots_outside_unit_circle(phi)) return 1e300;
        }
        if (spec.q > 0) {
            // MA polynomial 1 + theta_1 z + ...; same root test, negated.
            std::vector<double> th(spec.q);
            for (int j = 0; j < spec.q; ++j) th[j] = -pk.theta(v, j);
            if (!ar_roots_outside_unit_circle(th)) return 1e300;
        }
        return css_objective(v, pk, w, z, nullptr);
    };
    const SimplexResult best = nelder_mead(
        start, objective, 2000 * static_cast<int>(pk.size()));

    out.mu = pk.mu(best.x);
    out.phi.assign(spec.p, 0.0);
    out.theta.assign(spec.q, 0.0);
    out.beta.assign(spec.r, 0.0);
    for (int i = 0; i < spec.p; ++i) out.phi[i] = pk.phi(best.x, i);
    for (int j = 0; j < spec.q; ++j) out.theta[j] = pk.theta(best.x, j);
    for (int k = 0; k < spec.r; ++k) out.beta[k] = pk.beta(best.x, k);
    const int n_eff = n - spec.p;
    out.sigma2 = best.f / n_eff;
    out.aic =
        n_eff * std::log(std::max(out.sigma2, 1e-300)) + 2.0 * n_params;
    out.converged = best.converged;
    out.ar_stationary = ar_roots_outside_unit_circle(out.phi);
    return out;
}

ArimaxSpec auto_order(const std::vector<double>& series,
                      const std::vector<std::vector<double>>& exog) {
    ArimaxSpec spec;
    spec.r = static_cast<int>(exog.size());
    spec.d = 2;
    for (int d = 0; d <= 2; ++d) {
        const std::vector<double> w = difference(series, d);
        if (static_cast<int>(w.size()) < 20) break;
        bool stationary = false;
        try {
            stationary = unit_root_score(w).stationary;
        } catch (const std::runtime_error&) {
            // Degenerate (e.g. constant) differenced series: treat as
            // stationary rather than differencing further.
            stationary = true;
        }
        if (stationary) {
            spec.d = d;
            break;
        }
    }

    double best_aic = std::numeric_limits<double>::infinity();
    int best_p = 0;
    int best_q = 0;
    bool fitted_any = false;
    std::string last_error;
    for (int p = 0; p <= 3; ++p) {
        for (int q = 0; q <= 3; ++q) {
            ArimaxSpec candidate = spec;
            candidate.p = p;
            candidate.q = q;
            try {
                const ArimaxFit f = fit(series, exog, candidate);
                if (!fitted_any || f.aic < best_aic) {
                    best_aic = f.aic;
                    best_p = p;
                    best_q = q;
                    fitted_any = true;
                }
            } catch (const std::runtime_error& e) {
                // Usually too short for this order: skip the grid point.
                last_error = e.what();
            }
        }
    }
    if (!fitted_any) fail("no (p,q) order could be fitted: " + last_error);
    spec.p = best_p;
    spec.q = best_q;
    return spec;
}

double forecast(const ArimaxFit& fitted, const std::vector<double>& history,
                const std::vector<std::vector<double>>& exog, bool clamp) {
    const ArimaxSpec& spec = fitted.spec;
    const int t_len = static_cast<int>(history.size());
    if (t_len < spec.p + spec.d) fail("history shorter than p + d");
    if (static_cast<int>(exog.size()) != spec.r)
        fail("exog column count does not match the fit");
    for (const auto& col : exog)
        if (static_cast<int>(col.size()) != t_len + 1)
            fail("each exog column must extend one step past the history");

    const std::vector<double> w = difference(history, spec.d);
    std::vector<std::vector<double>> z;
    z.reserve(exog.size());
    for (const auto& col : exog) z.push_back(difference(col, spec.d));
    const int n = static_cast<int>(w.size());

    // Rebuild in-sample residuals with the fitted parameters, then assemble
    // the one-step prediction for instant n (the step after the history).
    std::vector<double> params;
    params.push_back(fitted.mu);
    params.insert(params.end(), fitted.phi.begin(), fitted.phi.end());
    params.insert(params.end(), fitted.theta.begin(), fitted.theta.end());
    params.insert(params.end(), fitted.beta.begin(), fitted.beta.end());
    const Packed pk{spec};
    std::vector<double> e;
    css_objective(params, pk, w, z, &e);

    double pred = fitted.mu;
    for (int i = 0; i < spec.p; ++i) pred += fitted.phi[i] * w[n - 1 - i];
    for (int k = 0; k < spec.r; ++k) pred += fitted.beta[k] * z[k][n];
    for (int j = 0; j < spec.q; ++j) {
        const int s = n - 1 - j;
        if (s >= spec.p) pred += fitted.theta[j] * e[s];
    }

    // Undo the differencing: y_T = w_T plus the binomial combination of the
    // last d history values.
    double y = pred;
    if (spec.d == 1) {
        y += history[t_len - 1];
    } else if (spec.d == 2) {
        y += 2.0 * history[t_len - 1] - history[t_len - 2];
    }
    if (clamp && y < 0.0) y = 0.0;
    return y;
}

std::string fit_report(const ArimaxFit& fitted) {
    std::string out = "arimax(p=" + std::to_string(fitted.spec.p) +
                      ",d=" + std::to_string(fitted.spec.d) +
                      ",q=" + std::to_string(fitted.spec.q) +
                      ",r=" + std::to_string(fitted.spec.r) + ")\n";
    out += "mu=" + io::fmt_double(fitted.mu) + "\n";
    for (std::size_t i = 0; i < fitted.phi.size(); ++i)
        out += "phi" + std::to_string(i + 1) + "=" +
               io::fmt_double(fitted.phi[i]) + "\n";
    for (std::size_t j = 0; j < fitted.theta.size(); ++j)
        out += "theta" + std::to_string(j + 1) + "=" +
               io::fmt_double(fitted.theta[j]) + "\n";
    for (std::size_t k = 0; k < fitted.beta.size(); ++k)
        out += "beta" + std::to_string(k + 1) + "=" +
               io::fmt_double(fitted.beta[k]) + "\n";
    out += "sigma2=" + io::fmt_double(fitted.sigma2) + "\n";
    out += "aic=" + io::fmt_double(fitted.aic) + "\n";
    out += std::string("ar_stationary=") +
           (fitted.ar_stationary ? "yes" : "no") + "\n";
    out += std::string("converged=") + (fitted.converged ? "yes" : "no") +
           "\n";
    return out;
}

}  // namespace ecoforecast::arimax
