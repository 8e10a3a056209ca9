#pragma once

// K-means over normalized predictor points with per-cluster GHG ER
// representatives: kmeans++ seeding, Lloyd iterations, elbow diagnostics,
// nearest-centroid prediction.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ecoforecast::kmeans {

struct KmeansModel {
    int k = 0;
    std::size_t dim = 0;
    std::vector<double> centroids;    // k rows of dim values, row-major
    std::vector<double> cluster_ghg;  // k representative rates, g/s
    double sse = 0.0;                 // final within-cluster squared error

    // Carried so a model file is usable on its own: names of the predictor
    // columns and the training normalization to apply before predict().
    std::vector<std::string> feature_names;
    std::vector<double> norm_mean;
    std::vector<double> norm_sd;
};

/// Lloyd's algorithm from kmeans++ seeding until the assignment fixpoint or
/// max_iter passes. Empty clusters are re-seeded from the point farthest
/// from its assigned centroid. sse_trace, when given, receives the objective
/// after every assignment pass (non-increasing). Requires n >= k >= 1.
KmeansModel fit(const std::vector<double>& x, std::size_t n, std::size_t dim,
                int k, std::uint64_t seed, int max_iter = 300,
                std::vector<double>* sse_trace = nullptr);

/// Nearest-centroid index per point (ties go to the lowest cluster index).
std::vector<int> assign(const KmeansModel& model, const std::vector<double>& x,
                        std::size_t n);

/// Best-of-5 seeded restarts per k in [k_min, k_max]. Each k past the first
/// also tries a warm start built from the previous k's best centroids plus
/// the farthest point, which keeps the reported curve non-increasing in k.
std::vector<std::pair<int, double>> elbow_curve(const std::vector<double>& x,
                                                std::size_t n, std::size_t dim,
                                                int k_min, int k_max,
                                                std::uint64_t seed,
                                                int jobs = 1);

/// Per-cluster representative = median of member GHG ERs (even counts take
/// the lower of the two middle values).
void assign_cluster_ghg(KmeansModel& model, const std::vector<double>& x,
                        std::size_t n, const std::vector<double>& ghg);

/// Representative rate of the nearest centroid.
double predict(const KmeansModel& model, const std::vector<double>& point);

std::string model_to_text(const KmeansModel& model);
KmeansModel model_from_text(const std::string& text);

std::string elbow_to_csv(const std::vector<std::pair<int, double>>& curve);

}  // namespace ecoforecast::kmeans
