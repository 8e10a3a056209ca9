#include "ecoforecast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "ecoforecast/io.hpp"

namespace ecoforecast {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("evaluation: " + msg);
}

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

Metrics evaluate(const std::vector<double>& y_true,
                 const std::vector<double>& y_pred) {
    if (y_true.size() != y_pred.size()) fail("length mismatch");
    if (y_true.size() < 2) fail("need at least 2 samples");
    const std::size_t n = y_true.size();

    double mean_true = 0.0;
    double mean_pred = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_true += y_true[i];
        mean_pred += y_pred[i];
    }
    mean_true /= n;
    mean_pred /= n;

    double ss_tot = 0.0;
    double ss_res = 0.0;
    double ss_pred = 0.0;
    double s_cross = 0.0;
    double sum_tp = 0.0;
    double sum_tt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = y_true[i] - mean_true;
        const double dp = y_pred[i] - mean_pred;
        const double e = y_true[i] - y_pred[i];
        ss_tot += dt * dt;
        ss_pred += dp * dp;
        s_cross += dt * dp;
        ss_res += e * e;
        sum_tp += y_true[i] * y_pred[i];
        sum_tt += y_true[i] * y_true[i];
    }

    Metrics m;
    m.n = static_cast<long>(n);
    m.rmse = std::sqrt(ss_res / n);
    m.fit_slope = sum_tt > 0.0 ? sum_tp / sum_tt : 0.0;
    if (ss_tot == 0.0 || ss_pred == 0.0) {
        m.correlation_defined = false;
        m.pearson_r = 0.0;
        m.r2 = 0.0;
        m.r2_squared_corr = 0.0;
        return m;
    }
    m.pearson_r = s_cross / std::sqrt(ss_tot * ss_pred);
    m.r2 = 1.0 - ss_res / ss_tot;
    m.r2_squared_corr = m.pearson_r * m.pearson_r;
    return m;
}

std::vector<CompareRow> compare(const std::vector<ModelPredictions>& models) {
    if (models.empty()) fail("no models to compare");

    std::map<std::string, const std::vector<double>*> cohort_truth;
    for (const ModelPredictions& mp : models) {
        const auto it = cohort_truth.find(mp.cohort);
        if (it == cohort_truth.end()) {
            cohort_truth[mp.cohort] = &mp.y_true;
        } else if (*it->second != mp.y_true) {
            fail("models in cohort '" + mp.cohort +
                 "' disagree on the test targets");
        }
    }

    std::vector<CompareRow> rows;
    rows.reserve(models.size());
    for (const ModelPredictions& mp : models) {
        CompareRow row;
        row.name = mp.name;
        row.cohort = mp.cohort;
        row.metrics = evaluate(mp.y_true, mp.y_pred);
        rows.push_back(std::move(row));
    }
    for (CompareRow& row : rows) {
        double best_other = std::numeric_limits<double>::infinity();
        for (const CompareRow& other : rows) {
            if (&other == &row || other.cohort != row.cohort) continue;
            best_other = std::min(best_other, other.metrics.rmse);
        }
        row.rmse_delta_pct =
            std::isfinite(best_other) && best_other > 0.0
                ? (row.metrics.rmse - best_other) / best_other * 100.0
                : std::numeric_limits<double>::quiet_NaN();
    }
    return rows;
}

std::string compare_report(const std::vector<CompareRow>& rows, bool verbose) {
    std::string out;
    out += "model           cohort    r       R2      slope   rmse_gps  "
           "vs_best_other\n";
    for (const CompareRow& row : rows) {
        const Metrics& m = row.metrics;
        std::string line = row.name;
        line.resize(std::max<std::size_t>(line.size() + 1, 16), ' ');
        std::string cohort = row.cohort;
        cohort.resize(std::max<std::size_t>(cohort.size() + 1, 10), ' ');
        line += cohort;
        if (m.correlation_defined) {
            line += fixed3(m.pearson_r) + "   " + fixed3(m.r2) + "  ";
        } else {
            line += "n/a     n/a     ";
        }
        line += fixed3(m.fit_slope) + "   " + fixed3(m.rmse) + "     ";
        if (std::isnan(row.rmse_delta_pct)) {
            line += "-";
        } else {
            line += (row.rmse_delta_pct >= 0.0 ? "+" : "") +
                    fixed3(row.rmse_delta_pct) + "%";
        }
        out += line + "\n";
        if (verbose && m.correlation_defined)
            out += "    r^2 (squared correlation) = " +
                   fixed3(m.r2_squared_corr) + "\n";
    }
    bool has_links4 = false;
    bool has_network = false;
    for (const CompareRow& row : rows) {
        if (row.cohort == "links4") has_links4 = true;
        if (row.cohort == "network") has_network = true;
    }
    if (has_links4 && has_network)
        out += "note: the links4 cohort is scored on its own chronological "
               "per-link test set and is not directly comparable to the "
               "network cohort\n";
    return out;
}

std::string compare_rows_to_csv(const std::vector<CompareRow>& rows) {
    std::string out =
        "model,cohort,n,pearson_r,r2,fit_slope,rmse_gps,rmse_delta_pct\n";
    for (const CompareRow& row : rows) {
        const Metrics& m = row.metrics;
        out += row.name + "," + row.cohort + "," + std::to_string(m.n) + ",";
        if (m.correlation_defined) {
            out += io::fmt_double(m.pearson_r) + "," + io::fmt_double(m.r2);
        } else {
            out += "nan,nan";
        }
        out += "," + io::fmt_double(m.fit_slope) + "," +
               io::fmt_double(m.rmse) + ",";
        out += std::isnan(row.rmse_delta_pct)
                   ? "nan"
                   : io::fmt_double(row.rmse_delta_pct);
        out += "\n";
    }
    return out;
}

std::string scatter_csv(const std::vector<double>& y_true,
                        const std::vector<double>& y_pred) {
    if (y_true.size() != y_pred.size()) fail("length mismatch");
    std::string out = "y_true,y_pred\n";
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        out += io::fmt_double(y_true[i]) + "," + io::fmt_double(y_pred[i]) +
               "\n";
    }
    return out;
}

}  // namespace ecoforecast
