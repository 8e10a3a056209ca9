#include "ecoforecast/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ecoforecast/io.hpp"

namespace ecoforecast {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("correlation: " + msg);
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) fail("length mismatch");
    if (x.size() < 2) fail("need at least 2 samples");
    const std::size_t n = x.size();
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) fail("zero variance");
    return sxy / std::sqrt(sxx * syy);
}

LagCorrelationMatrix lag_matrix(const std::vector<LinkIntervalRecord>& rows,
                                const std::vector<std::string>& variables,
                                int window) {
    if (window < 2) fail("window must be at least 2");
    if (variables.empty()) fail("no variables given");

    std::vector<LinkIntervalRecord> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const LinkIntervalRecord& a,
                        const LinkIntervalRecord& b) {
                         if (a.scenario_id != b.scenario_id)
                             return a.scenario_id < b.scenario_id;
                         if (a.link_id != b.link_id) return a.link_id < b.link_id;
                         return a.t_index < b.t_index;
                     });

    // Window start indices over contiguous (scenario, link) runs.
    std::vector<std::size_t> starts;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i + 1;
        while (j < sorted.size() &&
               sorted[j].scenario_id == sorted[i].scenario_id &&
               sorted[j].link_id == sorted[i].link_id &&
               sorted[j].t_index == sorted[j - 1].t_index + 1)
            ++j;
        const std::size_t run = j - i;
        if (run >= static_cast<std::size_t>(window)) {
            for (std::size_t s = i; s + window <= j; ++s) starts.push_back(s);
        }
        i = j;
    }

    LagCorrelationMatrix out;
    out.window = window;
    out.window_count = static_cast<long>(starts.size());
    out.low_sample_warning = starts.size() < 30;
    if (starts.empty()) return out;

    std::vector<double> ys;
    ys.reserve(starts.size());
    for (std::size_t s : starts)
        ys.push_back(sorted[s + window - 1].ghg_gps);

    for (const std::string& var : variables) {
        for (int lag = 1; lag < window; ++lag) {
            std::vector<double> xs;
            xs.reserve(starts.size());
            for (std::size_t s : starts)
                xs.push_back(feature_value(sorted[s + lag - 1], var));
            try {
                const double r = pearson(xs, ys);
                out.cells.push_back(
                    {var, lag, r, static_cast<long>(starts.size())});
            } catch (const std::runtime_error&) {
                // Zero-variance column (or constant target): cell omitted.
            }
        }
    }
    return out;
}

std::vector<std::string> rank_predictors(const LagCorrelationMatrix& matrix) {
    std::map<std::string, double> best;
    for (const LagCell& c : matrix.cells) {
        const double a = std::fabs(c.r);
        const auto it = best.find(c.variable);
        if (it == best.end() || a > it->second) best[c.variable] = a;
    }
    std::vector<std::string> order;
    for (const auto& [var, r] : best) order.push_back(var);
    std::sort(order.begin(), order.end(),
              [&](const std::string& a, const std::string& b) {
                  if (best[a] != best[b]) return best[a] > best[b];
                  return a < b;
              });
    return order;
}

std::string lag_matrix_to_csv(const LagCorrelationMatrix& matrix) {
    std::string out = "variable,lag,r,n\n";
    for (const LagCell& c : matrix.cells) {
        out += c.variable + "," + std::to_string(c.lag) + "," +
               io::fmt_double(c.r) + "," + std::to_string(c.n) + "\n";
    }
    return out;
}

LagCorrelationMatrix lag_matrix_from_csv(const std::string& text) {
    LagCorrelationMatrix matrix;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    int max_lag = 0;
    while (std::getline(in, line)) {
        const std::string t = io::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (first) {
            first = false;
            if (t.rfind("variable,", 0) == 0) continue;
        }
        const std::vector<std::string> f = io::split(t, ',');
        if (f.size() != 4) fail("malformed matrix row: " + t);
        LagCell c;
        c.variable = f[0];
        c.lag = io::parse_int(f[1]);
        c.r = io::parse_double(f[2]);
        c.n = io::parse_int(f[3]);
        matrix.cells.push_back(c);
        max_lag = std::max(max_lag, c.lag);
        matrix.window_count = std::max(matrix.window_count, c.n);
    }
    matrix.window = max_lag + 1;
    matrix.low_sample_warning = matrix.window_count < 30;
    return matrix;
}

std::string rank_report(const LagCorrelationMatrix& matrix) {
    std::map<std::string, double> best;
    for (const LagCell& c : matrix.cells) {
        const double a = std::fabs(c.r);
        const auto it = best.find(c.variable);
        if (it == best.end() || a > it->second) best[c.variable] = a;
    }
    const std::vector<std::string> order = rank_predictors(matrix);
    std::string out = "predictor ranking by max |r| over lags 1.." +
                      std::to_string(matrix.window - 1) + " (" +
                      std::to_string(matrix.window_count) + " windows)\n";
    int rank = 1;
    for (const std::string& var : order) {
        out += std::to_string(rank++) + ". " + var +
               " max|r|=" + io::fmt_double(best[var]) + "\n";
    }
    if (matrix.low_sample_warning)
        out += "warning: fewer than 30 windows; correlations are unstable\n";
    return out;
}

}  // namespace ecoforecast
