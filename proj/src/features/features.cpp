#include "ecoforecast/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ecoforecast/io.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("features: " + msg);
}

constexpr double kSdFloor = 1e-8;

}  // namespace

const std::vector<std::string>& feature_names_all() {
    static const std::vector<std::string> names = {
        "speed",    "density",    "flow",    "delay",
        "ghg_er",   "in_speed",   "in_density", "in_flow"};
    return names;
}

double feature_value(const LinkIntervalRecord& r, const std::string& name) {
    if (name == "speed") return r.speed_kmh;
    if (name == "density") return r.density_vkl;
    if (name == "flow") return r.flow_vph;
    if (name == "delay") return r.delay_s;
    if (name == "ghg_er") return r.ghg_gps;
    if (name == "in_speed") return r.in_speed_kmh;
    if (name == "in_density") return r.in_density_vkl;
    if (name == "in_flow") return r.in_flow_vph;
    fail("unknown feature '" + name + "'");
}

std::vector<LinkIntervalRecord> aggregate(
    const std::vector<EmissionRecord>& records, const Network& net,
    int interval_len_s, int scenario_id) {
    if (interval_len_s != 30 && interval_len_s != 60)
        fail("interval length must be 30 or 60 seconds");

    int max_t = -1;
    for (const EmissionRecord& r : records) {
        if (!net.has_link(r.link_id))
            fail("record references unknown link " + std::to_string(r.link_id));
        max_t = std::max(max_t, r.t_sec);
    }
    if (max_t < 0) return {};
    const int n_intervals = (max_t + interval_len_s) / interval_len_s;

    // Per (link, second): vehicle count, speed sum, emitted grams.
    struct SecondSlot {
        int count = 0;
        double speed_sum = 0.0;
        double grams = 0.0;
    };
    std::map<std::pair<int, int>, SecondSlot> by_link_second;
    // Exit seconds per link: a vehicle's last second on a contiguous link
    // stint counts as one boundary crossing in that second's interval.
    std::map<int, std::vector<int>> exits_by_link;
    {
        std::map<int, std::vector<std::pair<int, int>>> per_vehicle;  // (t, link)
        for (const EmissionRecord& r : records) {
            by_link_second[{r.link_id, r.t_sec}].count += 1;
            by_link_second[{r.link_id, r.t_sec}].speed_sum += r.speed_mps;
            by_link_second[{r.link_id, r.t_sec}].grams += r.rate_gps;
            per_vehicle[r.vehicle_id].emplace_back(r.t_sec, r.link_id);
        }
        for (auto& [vid, seq] : per_vehicle) {
            std::sort(seq.begin(), seq.end());
            for (std::size_t i = 0; i < seq.size(); ++i) {
                const bool last = i + 1 == seq.size();
                if (last || seq[i + 1].second != seq[i].second)
                    exits_by_link[seq[i].second].push_back(seq[i].first);
            }
        }
    }

    std::vector<LinkIntervalRecord> rows;
    rows.reserve(net.links().size() * n_intervals);
    for (const Link& link : net.links()) {
        const double len_km = link.length_m / 1000.0;
        const std::vector<int>* exits = nullptr;
        if (const auto it = exits_by_link.find(link.id);
            it != exits_by_link.end())
            exits = &it->second;
        for (int k = 0; k < n_intervals; ++k) {
            const int t0 = k * interval_len_s;
            const int t1 = t0 + interval_len_s;
            double speed_mean_sum = 0.0;
            int occupied_seconds = 0;
            long long count_sum = 0;
            double grams = 0.0;
            for (int t = t0; t < t1; ++t) {
                const auto it = by_link_second.find({link.id, t});
                if (it == by_link_second.end()) continue;
                const SecondSlot& slot = it->second;
                speed_mean_sum += slot.speed_sum / slot.count;
                occupied_seconds += 1;
                count_sum += slot.count;
                grams += slot.grams;
            }
            LinkIntervalRecord row;
            row.scenario_id = scenario_id;
            row.link_id = link.id;
            row.t_index = k;
            const double speed_mps =
                occupied_seconds > 0 ? speed_mean_sum / occupied_seconds
                                     : link.ffs_mps();
            row.speed_kmh = speed_mps * 3.6;
            row.density_vkl =
                (static_cast<double>(count_sum) / interval_len_s) /
                (len_km * link.lanes);
            int exit_count = 0;
            if (exits) {
                for (int t : *exits)
                    if (t >= t0 && t < t1) ++exit_count;
            }
            row.flow_vph = exit_count * 3600.0 / interval_len_s;
            const double ff_time = link.length_m / link.ffs_mps();
            const double actual_time =
                speed_mps > 0.0 ? link.length_m / speed_mps : 10.0 * ff_time;
            row.delay_s = std::max(0.0, actual_time - ff_time);
            row.ghg_gps = grams / interval_len_s;
            rows.push_back(row);
        }
    }

    // Upstream aggregates: unweighted means over in-links for the same
    // interval; a link with no in-links falls back to its own free flow.
    std::map<std::pair<int, int>, const LinkIntervalRecord*> by_key;
    for (const LinkIntervalRecord& r : rows) by_key[{r.link_id, r.t_index}] = &r;
    std::vector<LinkIntervalRecord> out = rows;
    for (LinkIntervalRecord& r : out) {
        const std::vector<int>& ups = net.in_links(r.link_id);
        if (ups.empty()) {
            r.in_speed_kmh = net.link(r.link_id).ffs_kmh;
            r.in_density_vkl = 0.0;
            r.in_flow_vph = 0.0;
            continue;
        }
        double speed = 0.0;
        double density = 0.0;
        double flow = 0.0;
        for (int up : ups) {
            const LinkIntervalRecord* u = by_key.at({up, r.t_index});
            speed += u->speed_kmh;
            density += u->density_vkl;
            flow += u->flow_vph;
        }
        r.in_speed_kmh = speed / ups.size();
        r.in_density_vkl = density / ups.size();
        r.in_flow_vph = flow / ups.size();
    }
    return out;
}

std::string link_records_to_csv(const std::vector<LinkIntervalRecord>& rows) {
    std::string out =
        "scenario_id,link_id,t_index,speed_kmh,density_vkl,flow_vph,delay_s,"
        "ghg_gps,in_speed_kmh,in_density_vkl,in_flow_vph\n";
    for (const LinkIntervalRecord& r : rows) {
        out += std::to_string(r.scenario_id) + "," + std::to_string(r.link_id) +
               "," + std::to_string(r.t_index) + "," +
               io::fmt_double(r.speed_kmh) + "," +
               io::fmt_double(r.density_vkl) + "," +
               io::fmt_double(r.flow_vph) + "," + io::fmt_double(r.delay_s) +
               "," + io::fmt_double(r.ghg_gps) + "," +
               io::fmt_double(r.in_speed_kmh) + "," +
               io::fmt_double(r.in_density_vkl) + "," +
               io::fmt_double(r.in_flow_vph) + "\n";
    }
    return out;
}

std::vector<LinkIntervalRecord> link_records_from_csv(const std::string& text) {
    std::vector<LinkIntervalRecord> rows;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const std::string t = io::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (first) {
            first = false;
            if (t.rfind("scenario_id,", 0) == 0) continue;
        }
        const std::vector<std::string> f = io::split(t, ',');
        if (f.size() != 11) fail("malformed link record: " + t);
        LinkIntervalRecord r;
        r.scenario_id = io::parse_int(f[0]);
        r.link_id = io::parse_int(f[1]);
        r.t_index = io::parse_int(f[2]);
        r.speed_kmh = io::parse_double(f[3]);
        r.density_vkl = io::parse_double(f[4]);
        r.flow_vph = io::parse_double(f[5]);
        r.delay_s = io::parse_double(f[6]);
        r.ghg_gps = io::parse_double(f[7]);
        r.in_speed_kmh = io::parse_double(f[8]);
        r.in_density_vkl = io::parse_double(f[9]);
        r.in_flow_vph = io::parse_double(f[10]);
        rows.push_back(r);
    }
    return rows;
}

SequenceDataset build_sequences(const std::vector<LinkIntervalRecord>& rows,
                                const std::vector<std::string>& predictors,
                                int n_seq) {
    if (n_seq < 1) fail("n_seq must be positive");
    if (predictors.empty()) fail("empty predictor list");
    for (const std::string& p : predictors) {
        const auto& all = feature_names_all();
        if (std::find(all.begin(), all.end(), p) == all.end())
            fail("unknown predictor '" + p + "'");
    }

    std::vector<LinkIntervalRecord> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const LinkIntervalRecord& a,
                        const LinkIntervalRecord& b) {
                         if (a.scenario_id != b.scenario_id)
                             return a.scenario_id < b.scenario_id;
                         if (a.link_id != b.link_id) return a.link_id < b.link_id;
                         return a.t_index < b.t_index;
                     });

    SequenceDataset ds;
    ds.n_seq = n_seq;
    ds.feature_names = predictors;
    const std::size_t nf = predictors.size();

    // Contiguous (scenario, link) runs with consecutive t_index values.
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i + 1;
        while (j < sorted.size() &&
               sorted[j].scenario_id == sorted[i].scenario_id &&
               sorted[j].link_id == sorted[i].link_id &&
               sorted[j].t_index == sorted[j - 1].t_index + 1)
            ++j;
        const std::size_t run = j - i;
        if (run > static_cast<std::size_t>(n_seq)) {
            for (std::size_t target = i + n_seq; target < j; ++target) {
                for (std::size_t s = target - n_seq; s < target; ++s) {
                    for (std::size_t f = 0; f < nf; ++f)
                        ds.x.push_back(
                            feature_value(sorted[s], predictors[f]));
                }
                ds.targets.push_back(sorted[target].ghg_gps);
                ds.keys.push_back({sorted[target].scenario_id,
                                   sorted[target].link_id,
                                   sorted[target].t_index});
            }
        }
        i = j;
    }
    return ds;
}

void split(SequenceDataset& dataset, SplitScheme scheme, std::uint64_t seed) {
    const std::size_t n = dataset.rows();
    if (n == 0) fail("cannot split an empty dataset");
    if (n < 10) fail("dataset too small to split (< 10 rows)");

    SplitIndices out;
    if (scheme == SplitScheme::arima_70_30) {
        // Chronological per (scenario, link): earliest 70% of each run
        // trains, the rest tests.
        std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < n; ++i)
            groups[{dataset.keys[i].scenario_id, dataset.keys[i].link_id}]
                .push_back(i);
        for (auto& [key, idx] : groups) {
            std::sort(idx.begin(), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return dataset.keys[a].t_index <
                                 dataset.keys[b].t_index;
                      });
            const std::size_t n_train = idx.size() * 7 / 10;
            for (std::size_t i = 0; i < idx.size(); ++i)
                (i < n_train ? out.train : out.test).push_back(idx[i]);
        }
        std::sort(out.train.begin(), out.train.end());
        std::sort(out.test.begin(), out.test.end());
        dataset.split = std::move(out);
        return;
    }

    // The permutation depends only on (seed, n), so the lstm and cluster
    // schemes carve their test sets from the same tail and agree exactly.
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng::Engine eng(rng::derive_seed(seed, "split_permutation", n));
    eng.shuffle(perm);

    const std::size_t n_train80 = n * 8 / 10;
    const std::size_t n_test = n - n_train80;
    if (scheme == SplitScheme::lstm_80_20) {
        out.train.assign(perm.begin(), perm.begin() + n_train80);
        out.test.assign(perm.end() - n_test, perm.end());
    } else {
        const std::size_t n_train70 = n * 7 / 10;
        out.train.assign(perm.begin(), perm.begin() + n_train70);
        out.val.assign(perm.begin() + n_train70, perm.end() - n_test);
        out.test.assign(perm.end() - n_test, perm.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    dataset.split = std::move(out);
}

void normalize(SequenceDataset& dataset) {
    if (dataset.split.train.empty()) fail("normalize needs a training split");
    const std::size_t nf = dataset.n_features();
    const std::size_t steps = static_cast<std::size_t>(dataset.n_seq);
    std::vector<double> mean(nf, 0.0);
    std::vector<double> sd(nf, 0.0);
    const double n_vals =
        static_cast<double>(dataset.split.train.size() * steps);
    for (std::size_t idx : dataset.split.train) {
        const double* row = dataset.row(idx);
        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t f = 0; f < nf; ++f) mean[f] += row[s * nf + f];
    }
    for (std::size_t f = 0; f < nf; ++f) mean[f] /= n_vals;
    for (std::size_t idx : dataset.split.train) {
        const double* row = dataset.row(idx);
        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t f = 0; f < nf; ++f) {
                const double d = row[s * nf + f] - mean[f];
                sd[f] += d * d;
            }
    }
    for (std::size_t f = 0; f < nf; ++f)
        sd[f] = std::max(std::sqrt(sd[f] / n_vals), kSdFloor);

    for (std::size_t i = 0; i < dataset.rows(); ++i) {
        double* row = dataset.x.data() + i * steps * nf;
        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t f = 0; f < nf; ++f)
                row[s * nf + f] = (row[s * nf + f] - mean[f]) / sd[f];
    }
    dataset.norm.mean = std::move(mean);
    dataset.norm.sd = std::move(sd);
}

void denormalize(SequenceDataset& dataset) {
    if (dataset.norm.mean.empty()) fail("dataset is not normalized");
    const std::size_t nf = dataset.n_features();
    const std::size_t steps = static_cast<std::size_t>(dataset.n_seq);
    for (std::size_t i = 0; i < dataset.rows(); ++i) {
        double* row = dataset.x.data() + i * steps * nf;
        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t f = 0; f < nf; ++f)
                row[s * nf + f] =
                    row[s * nf + f] * dataset.norm.sd[f] + dataset.norm.mean[f];
    }
    dataset.norm.mean.clear();
    dataset.norm.sd.clear();
}

void apply_normalization(SequenceDataset& dataset, const NormStats& stats) {
    const std::size_t nf = dataset.n_features();
    if (stats.mean.size() != nf || stats.sd.size() != nf)
        fail("normalization stats do not match the feature count");
    const std::size_t steps = static_cast<std::size_t>(dataset.n_seq);
    for (std::size_t i = 0; i < dataset.rows(); ++i) {
        double* row = dataset.x.data() + i * steps * nf;
        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t f = 0; f < nf; ++f)
                row[s * nf + f] = (row[s * nf + f] - stats.mean[f]) / stats.sd[f];
    }
    dataset.norm = stats;
}

SplitScheme split_scheme_from_string(const std::string& s) {
    if (s == "lstm_80_20") return SplitScheme::lstm_80_20;
    if (s == "cluster_70_10_20") return SplitScheme::cluster_70_10_20;
    if (s == "arima_70_30") return SplitScheme::arima_70_30;
    fail("unknown split scheme '" + s + "'");
}

const char* to_string(SplitScheme s) {
    switch (s) {
        case SplitScheme::lstm_80_20:
            return "lstm_80_20";
        case SplitScheme::cluster_70_10_20:
            return "cluster_70_10_20";
        default:
            return "arima_70_30";
    }
}

}  // namespace ecoforecast
