#include "ecoforecast/model_kmeans.hpp"

#include <algorithm>
#include <stdexcept>

#include "ecoforecast/io.hpp"
#include "ecoforecast/kernels.hpp"
#include "ecoforecast/parallel.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast::kmeans {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("kmeans: " + msg);
}

const double* point_at(const std::vector<double>& x, std::size_t dim,
                       std::size_t i) {
    return x.data() + i * dim;
}

int nearest_centroid(const KmeansModel& m, const double* p) {
    int best = 0;
    double best_d = kernels::sqdist(p, m.centroids.data(), m.dim);
    for (int c = 1; c < m.k; ++c) {
        const double d =
            kernels::sqdist(p, m.centroids.data() + c * m.dim, m.dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

double objective(const KmeansModel& m, const std::vector<double>& x,
                 std::size_t n, const std::vector<int>& labels) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sse += kernels::sqdist(point_at(x, m.dim, i),
                               m.centroids.data() + labels[i] * m.dim, m.dim);
    return sse;
}

// Lloyd from the given centroids; shared by the cold and warm start paths.
KmeansModel lloyd(const std::vector<double>& x, std::size_t n,
                  std::size_t dim, std::vector<double> centroids, int k,
                  int max_iter, std::vector<double>* sse_trace) {
    KmeansModel m;
    m.k = k;
    m.dim = dim;
    m.centroids = std::move(centroids);

    std::vector<int> labels = assign(m, x, n);
    if (sse_trace) sse_trace->push_back(objective(m, x, n, labels));

    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<std::size_t> counts(k);
    for (int iter = 0; iter < max_iter; ++iter) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = point_at(x, dim, i);
            double* s = sums.data() + labels[i] * dim;
            for (std::size_t d = 0; d < dim; ++d) s[d] += p[d];
            ++counts[labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < dim; ++d)
                m.centroids[c * dim + d] =
                    sums[c * dim + d] / static_cast<double>(counts[c]);
        }
        // Re-seed each empty cluster from the farthest unused point; a new
        // centroid only shortens nearest distances, so the objective still
        // cannot increase.
        std::vector<char> taken(n, 0);
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far_i = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                const double d = kernels::sqdist(
                    point_at(x, dim, i),
                    m.centroids.data() + labels[i] * dim, dim);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            taken[far_i] = 1;
            const double* p = point_at(x, dim, far_i);
            for (std::size_t d = 0; d < dim; ++d)
                m.centroids[c * dim + d] = p[d];
        }

        std::vector<int> next = assign(m, x, n);
        const bool fixpoint = next == labels;
        labels = std::move(next);
        if (sse_trace) sse_trace->push_back(objective(m, x, n, labels));
        if (fixpoint) break;
    }
    m.sse = objective(m, x, n, labels);
    return m;
}

std::vector<double> seed_kmeanspp(const std::vector<double>& x, std::size_t n,
                                  std::size_t dim, int k, std::uint64_t seed) {
    rng::Engine eng(seed);
    std::vector<double> centroids;
    centroids.reserve(static_cast<std::size_t>(k) * dim);

    const std::size_t first = static_cast<std::size_t>(eng.below(n));
    centroids.insert(centroids.end(), point_at(x, dim, first),
                     point_at(x, dim, first) + dim);

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i)
        d2[i] = kernels::sqdist(point_at(x, dim, i), centroids.data(), dim);

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick;
        if (total > 0.0) {
            const double u = eng.uniform01() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            // Degenerate input (fewer distinct points than k).
            pick = static_cast<std::size_t>(eng.below(n));
        }
        const double* p = point_at(x, dim, pick);
        centroids.insert(centroids.end(), p, p + dim);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(
                d2[i], kernels::sqdist(point_at(x, dim, i), p, dim));
    }
    return centroids;
}

}  // namespace

KmeansModel fit(const std::vector<double>& x, std::size_t n, std::size_t dim,
                int k, std::uint64_t seed, int max_iter,
                std::vector<double>* sse_trace) {
    if (k < 1) fail("k must be at least 1");
    if (dim == 0) fail("zero-dimensional points");
    if (x.size() != n * dim) fail("point buffer size does not match n*dim");
    if (n < static_cast<std::size_t>(k)) fail("fewer points than clusters");
    KmeansModel m = lloyd(x, n, dim, seed_kmeanspp(x, n, dim, k, seed), k,
                          max_iter, sse_trace);
    m.feature_names.resize(dim);
    for (std::size_t d = 0; d < dim; ++d)
        m.feature_names[d] = "f" + std::to_string(d);
    m.norm_mean.assign(dim, 0.0);
    m.norm_sd.assign(dim, 1.0);
    return m;
}

std::vector<int> assign(const KmeansModel& model, const std::vector<double>& x,
                        std::size_t n) {
    if (x.size() != n * model.dim) fail("point buffer size mismatch");
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = nearest_centroid(model, point_at(x, model.dim, i));
    return labels;
}

std::vector<std::pair<int, double>> elbow_curve(const std::vector<double>& x,
                                                std::size_t n, std::size_t dim,
                                                int k_min, int k_max,
                                                std::uint64_t seed, int jobs) {
    if (k_min < 1 || k_max < k_min) fail("bad elbow range");
    if (n < static_cast<std::size_t>(k_max))
        fail("elbow range exceeds the point count");

    constexpr int kRestarts = 5;
    std::vector<std::pair<int, double>> out;
    KmeansModel prev_best;
    for (int k = k_min; k <= k_max; ++k) {
        std::vector<KmeansModel> runs(kRestarts);
        parallel_for(kRestarts, jobs, [&](std::size_t r) {
            runs[r] = fit(
                x, n, dim, k,
                rng::derive_seed(seed, "elbow_restart",
                                 static_cast<std::uint64_t>(k) * kRestarts +
                                     r));
        });
        // Warm start: previous k's best centroids plus the farthest point.
        // Lloyd never raises the objective, so this candidate pins the curve
        // at or below the previous k's value.
        if (prev_best.k == k - 1 && k > k_min) {
            std::vector<double> warm = prev_best.centroids;
            const std::vector<int> labels = assign(prev_best, x, n);
            std::size_t far_i = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = kernels::sqdist(
                    point_at(x, dim, i),
                    prev_best.centroids.data() + labels[i] * dim, dim);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            warm.insert(warm.end(), point_at(x, dim, far_i),
                        point_at(x, dim, far_i) + dim);
            runs.push_back(lloyd(x, n, dim, std::move(warm), k, 300, nullptr));
        }
        std::size_t best = 0;
        for (std::size_t r = 1; r < runs.size(); ++r)
            if (runs[r].sse < runs[best].sse) best = r;
        out.emplace_back(k, runs[best].sse);
        prev_best = std::move(runs[best]);
    }
    return out;
}

void assign_cluster_ghg(KmeansModel& model, const std::vector<double>& x,
                        std::size_t n, const std::vector<double>& ghg) {
    if (ghg.size() != n) fail("ghg length does not match the point count");
    const std::vector<int> labels = assign(model, x, n);
    std::vector<std::vector<double>> members(model.k);
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(ghg[i]);
    model.cluster_ghg.assign(model.k, 0.0);
    for (int c = 0; c < model.k; ++c) {
        auto& v = members[c];
        if (v.empty()) fail("empty cluster while assigning representatives");
        std::sort(v.begin(), v.end());
        model.cluster_ghg[c] = v[(v.size() - 1) / 2];
    }
}

double predict(const KmeansModel& model, const std::vector<double>& point) {
    if (point.size() != model.dim) fail("point dimension mismatch");
    if (model.cluster_ghg.size() != static_cast<std::size_t>(model.k))
        fail("model has no cluster representatives");
    return model.cluster_ghg[nearest_centroid(model, point.data())];
}

std::string model_to_text(const KmeansModel& model) {
    std::string out = "kmeans_model_v1\n";
    out += "k," + std::to_string(model.k) + "\n";
    out += "dim," + std::to_string(model.dim) + "\n";
    out += "features";
    for (const auto& name : model.feature_names) out += "," + name;
    out += "\nnorm_mean";
    for (double v : model.norm_mean) out += "," + io::fmt_double(v);
    out += "\nnorm_sd";
    for (double v : model.norm_sd) out += "," + io::fmt_double(v);
    out += "\n";
    for (int c = 0; c < model.k; ++c) {
        out += "centroid";
        for (std::size_t d = 0; d < model.dim; ++d)
            out += "," + io::fmt_double(model.centroids[c * model.dim + d]);
        out += "\n";
    }
    out += "cluster_ghg";
    for (double v : model.cluster_ghg) out += "," + io::fmt_double(v);
    out += "\nsse," + io::fmt_double(model.sse) + "\n";
    out += "end\n";
    return out;
}

KmeansModel model_from_text(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = io::trim(text.substr(pos, nl - pos));
        if (!line.empty()) lines.push_back(line);
        pos = nl + 1;
    }
    std::size_t at = 0;
    const auto next = [&]() -> const std::string& {
        if (at >= lines.size()) fail("truncated model file");
        return lines[at++];
    };
    const auto fields = [&](const std::string& tag) {
        std::vector<std::string> f = io::split(next(), ',');
        if (f.empty() || f[0] != tag)
            fail("expected '" + tag + "' row in model file");
        f.erase(f.begin());
        return f;
    };

    if (next() != "kmeans_model_v1") fail("unrecognized model file header");
    KmeansModel m;
    {
        const auto f = fields("k");
        if (f.size() != 1) fail("malformed k row");
        m.k = static_cast<int>(io::parse_int(f[0]));
    }
    {
        const auto f = fields("dim");
        if (f.size() != 1) fail("malformed dim row");
        m.dim = static_cast<std::size_t>(io::parse_int(f[0]));
    }
    if (m.k < 1 || m.dim == 0) fail("non-positive k or dim");
    m.feature_names = fields("features");
    if (m.feature_names.size() != m.dim) fail("feature name count mismatch");
    for (const std::string& v : fields("norm_mean"))
        m.norm_mean.push_back(io::parse_double(v));
    for (const std::string& v : fields("norm_sd"))
        m.norm_sd.push_back(io::parse_double(v));
    if (m.norm_mean.size() != m.dim || m.norm_sd.size() != m.dim)
        fail("normalization row length mismatch");
    for (int c = 0; c < m.k; ++c)
        for (const std::string& v : fields("centroid"))
            m.centroids.push_back(io::parse_double(v));
    if (m.centroids.size() != static_cast<std::size_t>(m.k) * m.dim)
        fail("centroid row length mismatch");
    for (const std::string& v : fields("cluster_ghg"))
        m.cluster_ghg.push_back(io::parse_double(v));
    if (m.cluster_ghg.size() != static_cast<std::size_t>(m.k))
        fail("cluster_ghg row length mismatch");
    {
        const auto f = fields("sse");
        if (f.size() != 1) fail("malformed sse row");
        m.sse = io::parse_double(f[0]);
    }
    if (next() != "end") fail("missing end marker");
    return m;
}

std::string elbow_to_csv(const std::vector<std::pair<int, double>>& curve) {
    std::string out = "k,sse\n";
    for (const auto& [k, sse] : curve)
        out += std::to_string(k) + "," + io::fmt_double(sse) + "\n";
    return out;
}

}  // namespace ecoforecast::kmeans
