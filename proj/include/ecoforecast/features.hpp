#pragma once

// Link-interval feature extraction: aggregate per-second emission records to
// per-link per-interval rows, attach upstream (in-link) aggregates, build
// lagged sequence datasets, normalize, and split.

#include <cstdint>
#include <string>
#include <vector>

#include "ecoforecast/emissions.hpp"
#include "ecoforecast/road_network.hpp"

namespace ecoforecast {

struct LinkIntervalRecord {
    int scenario_id = 0;
    int link_id = 0;
    int t_index = 0;
    double speed_kmh = 0.0;    // space-mean
    double density_vkl = 0.0;  // veh/km/lane
    double flow_vph = 0.0;     // veh/h
    double delay_s = 0.0;
    double ghg_gps = 0.0;      // g/s CO2eq
    double in_speed_kmh = 0.0;
    double in_density_vkl = 0.0;
    double in_flow_vph = 0.0;

    bool operator==(const LinkIntervalRecord&) const = default;
};

/// The eight per-record feature names accepted by build_sequences, in
/// canonical order.
const std::vector<std::string>& feature_names_all();

double feature_value(const LinkIntervalRecord& r, const std::string& name);

/// Aggregates per-second emission records into one row per (link, interval).
/// Every network link gets a row for every interval covered by the records
/// (empty links use free-flow conventions), so sequence windows stay
/// gap-free. Rows are sorted by (link_id, t_index).
std::vector<LinkIntervalRecord> aggregate(
    const std::vector<EmissionRecord>& records, const Network& net,
    int interval_len_s, int scenario_id);

std::string link_records_to_csv(const std::vector<LinkIntervalRecord>& rows);
std::vector<LinkIntervalRecord> link_records_from_csv(const std::string& text);

struct SequenceKey {
    int scenario_id = 0;
    int link_id = 0;
    int t_index = 0;  // interval index of the target

    bool operator==(const SequenceKey&) const = default;
};

struct NormStats {
    std::vector<double> mean;  // per feature
    std::vector<double> sd;    // per feature, floored at 1e-8
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

enum class SplitScheme {
    lstm_80_20,
    cluster_70_10_20,
    arima_70_30,
};

/// Lagged windows: x has shape (n_rows, n_seq, n_features) in row-major
/// order, targets are next-interval GHG ER in g/s. keys identify the target
/// interval of each row.
struct SequenceDataset {
    int n_seq = 0;
    std::vector<std::string> feature_names;
    std::vector<double> x;
    std::vector<double> targets;
    std::vector<SequenceKey> keys;
    NormStats norm;  // empty until normalize() is applied
    SplitIndices split;

    std::size_t rows() const { return targets.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    const double* row(std::size_t i) const {
        return x.data() + i * n_seq * n_features();
    }
    const double* step(std::size_t i, int s) const {
        return row(i) + static_cast<std::size_t>(s) * n_features();
    }
};

/// Builds all windows of n_seq consecutive intervals per (scenario, link)
/// run; the target is the GHG ER of the interval after the window. Windows
/// never bridge scenarios or t_index gaps.
SequenceDataset build_sequences(const std::vector<LinkIntervalRecord>& rows,
                                const std::vector<std::string>& predictors,
                                int n_seq);

/// Fills dataset.split. Random schemes use a permutation that depends only
/// on (seed, row count); the lstm and cluster schemes share an identical
/// test tail. arima_70_30 is chronological per (scenario, link).
void split(SequenceDataset& dataset, SplitScheme scheme, std::uint64_t seed);

/// Z-scores features in place with training-split statistics (sd floor
/// 1e-8). Targets stay in g/s. Requires split.train to be non-empty.
void normalize(SequenceDataset& dataset);

/// Inverse of normalize, restoring raw feature values.
void denormalize(SequenceDataset& dataset);

/// Z-scores with externally supplied statistics (e.g. a stored model's
/// train-time stats applied to fresh data).
void apply_normalization(SequenceDataset& dataset, const NormStats& stats);

SplitScheme split_scheme_from_string(const std::string& s);
const char* to_string(SplitScheme s);

}  // namespace ecoforecast
