#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "ecoforecast/emissions.hpp"
#include "ecoforecast/features.hpp"
#include "ecoforecast/road_network.hpp"
#include "ecoforecast/traffic_sim.hpp"

using namespace ecoforecast;

namespace {

// Two bidirectional segments in a line; ffs 36 km/h = 10 m/s, 1 km, 1 lane.
Network line_net() {
    return load_network(
        "node,0\nnode,1\nnode,2\n"
        "link,1,0,1,1000,1,36\n"
        "link,2,1,0,1000,1,36\n"
        "link,3,1,2,1000,1,36\n"
        "link,4,2,1,1000,1,36\n");
}

EmissionRecord rec(int t, int vid, int link, double speed, double rate) {
    EmissionRecord r;
    r.t_sec = t;
    r.vehicle_id = vid;
    r.link_id = link;
    r.speed_mps = speed;
    r.rate_gps = rate;
    return r;
}

const LinkIntervalRecord& row_of(const std::vector<LinkIntervalRecord>& rows,
                                 int link, int t_index) {
    for (const LinkIntervalRecord& r : rows)
        if (r.link_id == link && r.t_index == t_index) return r;
    REQUIRE(false);
    return rows.front();
}

// One link's records for t_index lo..hi with smooth synthetic values.
std::vector<LinkIntervalRecord> synth_rows(int scenario, int link, int t_lo,
                                           int t_hi) {
    std::vector<LinkIntervalRecord> rows;
    for (int t = t_lo; t <= t_hi; ++t) {
        LinkIntervalRecord r;
        r.scenario_id = scenario;
        r.link_id = link;
        r.t_index = t;
        r.speed_kmh = 30.0 + t;
        r.density_vkl = 2.0 + 0.1 * t;
        r.flow_vph = 100.0 + 3.0 * t;
        r.delay_s = 0.5 * t;
        r.ghg_gps = 1.0 + 0.25 * t;
        r.in_speed_kmh = 28.0 + t;
        r.in_density_vkl = 1.5 + 0.1 * t;
        r.in_flow_vph = 90.0 + 2.0 * t;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("feature_value maps every canonical name") {
    LinkIntervalRecord r;
    r.speed_kmh = 1;
    r.density_vkl = 2;
    r.flow_vph = 3;
    r.delay_s = 4;
    r.ghg_gps = 5;
    r.in_speed_kmh = 6;
    r.in_density_vkl = 7;
    r.in_flow_vph = 8;
    const std::vector<std::string>& names = feature_names_all();
    REQUIRE(names.size() == 8);
    for (std::size_t i = 0; i < names.size(); ++i)
        CHECK(feature_value(r, names[i]) == static_cast<double>(i + 1));
    CHECK_THROWS(feature_value(r, "speed_kmh"));
}

TEST_CASE("aggregate reproduces hand-computed interval features") {
    const Network net = line_net();
    std::vector<EmissionRecord> em;
    // Vehicle 1 spends t=0,1 on link 1 then hops to link 3 at t=2.
    em.push_back(rec(0, 1, 1, 5.0, 2.0));
    em.push_back(rec(1, 1, 1, 10.0, 3.0));
    em.push_back(rec(2, 1, 3, 10.0, 0.5));
    // Vehicle 2 shows up on link 1 for a single second.
    em.push_back(rec(0, 2, 1, 15.0, 1.0));

    const std::vector<LinkIntervalRecord> rows = aggregate(em, net, 60, 4);
    // One interval, every link gets a row, sorted by (link_id, t_index).
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i - 1].link_id < rows[i].link_id);
    for (const LinkIntervalRecord& r : rows) {
        CHECK(r.scenario_id == 4);
        CHECK(r.t_index == 0);
    }

    const LinkIntervalRecord& l1 = row_of(rows, 1, 0);
    // Second 0 mean speed (5+15)/2 = 10, second 1 speed 10; both occupied.
    CHECK(l1.speed_kmh == doctest::Approx(36.0).epsilon(1e-12));
    // Three vehicle-seconds over 60 s on 1 km x 1 lane.
    CHECK(l1.density_vkl == doctest::Approx(3.0 / 60.0).epsilon(1e-12));
    // Vehicle 1 leaves link 1 at t=1, vehicle 2's stint ends at t=0.
    CHECK(l1.flow_vph == doctest::Approx(120.0).epsilon(1e-12));
    CHECK(l1.delay_s == 0.0);  // space-mean speed equals free flow
    CHECK(l1.ghg_gps == doctest::Approx(6.0 / 60.0).epsilon(1e-12));

    const LinkIntervalRecord& l3 = row_of(rows, 3, 0);
    CHECK(l3.speed_kmh == doctest::Approx(36.0).epsilon(1e-12));
    CHECK(l3.density_vkl == doctest::Approx(1.0 / 60.0).epsilon(1e-12));
    CHECK(l3.flow_vph == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(l3.ghg_gps == doctest::Approx(0.5 / 60.0).epsilon(1e-12));

    // Link 3's only upstream link (reverse direction excluded) is link 1.
    CHECK(l3.in_speed_kmh == doctest::Approx(l1.speed_kmh));
    CHECK(l3.in_density_vkl == doctest::Approx(l1.density_vkl));
    CHECK(l3.in_flow_vph == doctest::Approx(l1.flow_vph));

    // Link 1 has no upstream links; it falls back to its own free flow.
    CHECK(l1.in_speed_kmh == doctest::Approx(36.0));
    CHECK(l1.in_density_vkl == 0.0);
    CHECK(l1.in_flow_vph == 0.0);

    // Untravelled links report free-flow speed and zeros.
    const LinkIntervalRecord& l2 = row_of(rows, 2, 0);
    CHECK(l2.speed_kmh == doctest::Approx(36.0));
    CHECK(l2.density_vkl == 0.0);
    CHECK(l2.flow_vph == 0.0);
    CHECK(l2.delay_s == 0.0);
    CHECK(l2.ghg_gps == 0.0);
}

TEST_CASE("aggregate computes delay from the space-mean speed") {
    const Network net = line_net();
    // A single vehicle crawling at 5 m/s where free flow is 10 m/s:
    // travel time 200 s vs 100 s free flow.
    std::vector<EmissionRecord> em = {rec(0, 1, 1, 5.0, 1.0)};
    const std::vector<LinkIntervalRecord> rows = aggregate(em, net, 60, 0);
    const LinkIntervalRecord& l1 = row_of(rows, 1, 0);
    CHECK(l1.speed_kmh == doctest::Approx(18.0));
    CHECK(l1.delay_s == doctest::Approx(100.0).epsilon(1e-12));

    // A stopped vehicle uses the 10x free-flow travel-time convention.
    std::vector<EmissionRecord> stopped = {rec(0, 1, 1, 0.0, 1.0)};
    const std::vector<LinkIntervalRecord> rows2 = aggregate(stopped, net, 60, 0);
    CHECK(row_of(rows2, 1, 0).delay_s == doctest::Approx(900.0).epsilon(1e-12));
}

TEST_CASE("aggregate splits records into consecutive intervals") {
    const Network net = line_net();
    std::vector<EmissionRecord> em = {rec(0, 1, 1, 10.0, 1.0),
                                      rec(65, 2, 1, 10.0, 2.0)};
    const std::vector<LinkIntervalRecord> rows60 = aggregate(em, net, 60, 0);
    REQUIRE(rows60.size() == 8);  // 4 links x 2 intervals
    CHECK(row_of(rows60, 1, 0).ghg_gps == doctest::Approx(1.0 / 60.0));
    CHECK(row_of(rows60, 1, 1).ghg_gps == doctest::Approx(2.0 / 60.0));

    const std::vector<LinkIntervalRecord> rows30 = aggregate(em, net, 30, 0);
    REQUIRE(rows30.size() == 12);  // 4 links x 3 intervals
    CHECK(row_of(rows30, 1, 0).ghg_gps == doctest::Approx(1.0 / 30.0));
    CHECK(row_of(rows30, 1, 1).ghg_gps == 0.0);
    CHECK(row_of(rows30, 1, 2).ghg_gps == doctest::Approx(2.0 / 30.0));
}

TEST_CASE("aggregate rejects bad input") {
    const Network net = line_net();
    std::vector<EmissionRecord> em = {rec(0, 1, 1, 10.0, 1.0)};
    CHECK_THROWS(aggregate(em, net, 45, 0));
    std::vector<EmissionRecord> bad = {rec(0, 1, 99, 10.0, 1.0)};
    CHECK_THROWS(aggregate(bad, net, 60, 0));
    CHECK(aggregate({}, net, 60, 0).empty());
}

TEST_CASE("simulated aggregation covers every link and interval") {
    const Network net = generate_grid(2, 2, 400.0, {1}, {50.0}, 3);
    DemandScenario sc;
    sc.n_vehicles = 12;
    sc.departure_distribution = DepartureDistribution::uniform;
    sc.horizon_s = 150.0;
    sc.od_pairs = {{0, 3, 1.0}};
    const SimResult res = run_scenario(net, sc, IdmParams{}, 60, 11);
    const std::vector<EmissionRecord> em =
        annotate(res.records, VehicleSpec{}, default_opmode_table());
    const std::vector<LinkIntervalRecord> rows = aggregate(em, net, 60, 1);
    REQUIRE(!rows.empty());
    CHECK(rows.size() % net.links().size() == 0);
    std::set<int> links_seen;
    for (const LinkIntervalRecord& r : rows) {
        links_seen.insert(r.link_id);
        CHECK(r.speed_kmh >= 0.0);
        CHECK(r.density_vkl >= 0.0);
        CHECK(r.flow_vph >= 0.0);
        CHECK(r.delay_s >= 0.0);
        CHECK(r.ghg_gps >= 0.0);
    }
    CHECK(links_seen.size() == net.links().size());
}

TEST_CASE("link records round-trip through csv") {
    const std::vector<LinkIntervalRecord> rows = synth_rows(2, 7, 0, 9);
    CHECK(link_records_from_csv(link_records_to_csv(rows)) == rows);
}

TEST_CASE("build_sequences produces one window per eligible target") {
    const std::vector<LinkIntervalRecord> rows = synth_rows(1, 5, 0, 9);
    const SequenceDataset ds = build_sequences(rows, {"speed", "ghg_er"}, 3);
    REQUIRE(ds.rows() == 7);  // targets at t_index 3..9
    CHECK(ds.n_features() == 2);
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        const int target_t = static_cast<int>(i) + 3;
        CHECK(ds.keys[i] == SequenceKey{1, 5, target_t});
        CHECK(ds.targets[i] == doctest::Approx(1.0 + 0.25 * target_t));
        for (int s = 0; s < 3; ++s) {
            const double* step = ds.step(i, s);
            const int t = target_t - 3 + s;
            CHECK(step[0] == doctest::Approx(30.0 + t));
            CHECK(step[1] == doctest::Approx(1.0 + 0.25 * t));
        }
    }
}

TEST_CASE("windows never bridge a t_index gap") {
    std::vector<LinkIntervalRecord> rows = synth_rows(1, 5, 0, 3);
    const std::vector<LinkIntervalRecord> tail = synth_rows(1, 5, 5, 8);
    rows.insert(rows.end(), tail.begin(), tail.end());
    const SequenceDataset ds = build_sequences(rows, {"ghg_er"}, 3);
    REQUIRE(ds.rows() == 2);  // one window per 4-interval run
    CHECK(ds.keys[0].t_index == 3);
    CHECK(ds.keys[1].t_index == 8);
}

TEST_CASE("windows never bridge scenarios") {
    std::vector<LinkIntervalRecord> rows = synth_rows(1, 5, 0, 3);
    const std::vector<LinkIntervalRecord> other = synth_rows(2, 5, 4, 7);
    rows.insert(rows.end(), other.begin(), other.end());
    const SequenceDataset ds = build_sequences(rows, {"ghg_er"}, 3);
    REQUIRE(ds.rows() == 2);
    CHECK(ds.keys[0] == SequenceKey{1, 5, 3});
    CHECK(ds.keys[1] == SequenceKey{2, 5, 7});
}

TEST_CASE("a run of exactly n_seq intervals yields no window") {
    const std::vector<LinkIntervalRecord> rows = synth_rows(1, 5, 0, 2);
    CHECK(build_sequences(rows, {"ghg_er"}, 3).rows() == 0);
    CHECK(build_sequences(synth_rows(1, 5, 0, 3), {"ghg_er"}, 3).rows() == 1);
}

TEST_CASE("build_sequences validates its arguments") {
    const std::vector<LinkIntervalRecord> rows = synth_rows(1, 5, 0, 9);
    CHECK_THROWS(build_sequences(rows, {}, 3));
    CHECK_THROWS(build_sequences(rows, {"bogus"}, 3));
    CHECK_THROWS(build_sequences(rows, {"speed"}, 0));
}

TEST_CASE("random splits partition the rows with the documented sizes") {
    SequenceDataset ds = build_sequences(synth_rows(1, 5, 0, 23), {"speed"}, 3);
    REQUIRE(ds.rows() == 21);

    split(ds, SplitScheme::lstm_80_20, 7);
    CHECK(ds.split.train.size() == 21 * 8 / 10);
    CHECK(ds.split.val.empty());
    CHECK(ds.split.test.size() == 21 - 21 * 8 / 10);

    SequenceDataset dc = ds;
    split(dc, SplitScheme::cluster_70_10_20, 7);
    CHECK(dc.split.train.size() == 21 * 7 / 10);
    CHECK(dc.split.test.size() == 21 - 21 * 8 / 10);
    CHECK(dc.split.train.size() + dc.split.val.size() + dc.split.test.size() ==
          21);

    // Both schemes carve the test set from the same permutation tail.
    CHECK(ds.split.test == dc.split.test);

    for (const SplitIndices& s : {ds.split, dc.split}) {
        std::set<std::size_t> seen;
        for (const auto* part : {&s.train, &s.val, &s.test}) {
            CHECK(std::is_sorted(part->begin(), part->end()));
            for (std::size_t i : *part) CHECK(seen.insert(i).second);
        }
        CHECK(seen.size() == 21);
    }
}

TEST_CASE("splits are seed-deterministic") {
    SequenceDataset a = build_sequences(synth_rows(1, 5, 0, 23), {"speed"}, 3);
    SequenceDataset b = a;
    SequenceDataset c = a;
    split(a, SplitScheme::lstm_80_20, 7);
    split(b, SplitScheme::lstm_80_20, 7);
    split(c, SplitScheme::lstm_80_20, 8);
    CHECK(a.split.train == b.split.train);
    CHECK(a.split.test == b.split.test);
    CHECK(a.split.train != c.split.train);
}

TEST_CASE("arima split is chronological per scenario and link") {
    std::vector<LinkIntervalRecord> rows = synth_rows(1, 1, 0, 13);
    const std::vector<LinkIntervalRecord> more = synth_rows(1, 2, 0, 13);
    rows.insert(rows.end(), more.begin(), more.end());
    SequenceDataset ds = build_sequences(rows, {"speed"}, 3);
    REQUIRE(ds.rows() == 22);
    split(ds, SplitScheme::arima_70_30, 99);
    CHECK(ds.split.train.size() == 14);  // 7 of 11 per link
    CHECK(ds.split.test.size() == 8);
    std::map<int, int> max_train_t;
    std::map<int, int> min_test_t;
    for (std::size_t i : ds.split.train) {
        const SequenceKey& k = ds.keys[i];
        max_train_t[k.link_id] =
            std::max(max_train_t.count(k.link_id) ? max_train_t[k.link_id]
                                                  : -1,
                     k.t_index);
    }
    for (std::size_t i : ds.split.test) {
        const SequenceKey& k = ds.keys[i];
        min_test_t[k.link_id] =
            std::min(min_test_t.count(k.link_id) ? min_test_t[k.link_id]
                                                 : 1 << 30,
                     k.t_index);
    }
    for (const auto& [link, t] : max_train_t) CHECK(t < min_test_t[link]);
}

TEST_CASE("split rejects tiny datasets") {
    SequenceDataset ds = build_sequences(synth_rows(1, 5, 0, 5), {"speed"}, 3);
    REQUIRE(ds.rows() == 3);
    CHECK_THROWS(split(ds, SplitScheme::lstm_80_20, 1));
}

TEST_CASE("normalize zero-means and unit-scales the training features") {
    SequenceDataset ds =
        build_sequences(synth_rows(1, 5, 0, 23), {"speed", "density"}, 3);
    split(ds, SplitScheme::lstm_80_20, 7);
    const std::vector<double> raw_x = ds.x;
    const std::vector<double> raw_targets = ds.targets;
    normalize(ds);
    REQUIRE(ds.norm.mean.size() == 2);
    REQUIRE(ds.norm.sd.size() == 2);
    CHECK(ds.targets == raw_targets);

    for (std::size_t f = 0; f < 2; ++f) {
        double mean = 0.0;
        double var = 0.0;
        const std::size_t n_vals = ds.split.train.size() * 3;
        for (std::size_t idx : ds.split.train)
            for (int s = 0; s < 3; ++s) mean += ds.step(idx, s)[f];
        mean /= n_vals;
        for (std::size_t idx : ds.split.train)
            for (int s = 0; s < 3; ++s) {
                const double d = ds.step(idx, s)[f] - mean;
                var += d * d;
            }
        var /= n_vals;
        CHECK(std::fabs(mean) < 1e-12);
        CHECK(std::fabs(var - 1.0) < 1e-12);
    }

    denormalize(ds);
    REQUIRE(ds.x.size() == raw_x.size());
    for (std::size_t i = 0; i < raw_x.size(); ++i)
        CHECK(ds.x[i] == doctest::Approx(raw_x[i]).epsilon(1e-12));
    CHECK(ds.norm.mean.empty());
}

TEST_CASE("apply_normalization reuses stored statistics") {
    SequenceDataset ds =
        build_sequences(synth_rows(1, 5, 0, 23), {"speed", "ghg_er"}, 3);
    split(ds, SplitScheme::lstm_80_20, 7);
    SequenceDataset fresh = ds;
    normalize(ds);
    apply_normalization(fresh, ds.norm);
    CHECK(fresh.x == ds.x);

    NormStats wrong;
    wrong.mean = {0.0};
    wrong.sd = {1.0};
    CHECK_THROWS(apply_normalization(fresh, wrong));
}

TEST_CASE("a constant feature normalizes to zero via the sd floor") {
    std::vector<LinkIntervalRecord> rows = synth_rows(1, 5, 0, 23);
    for (LinkIntervalRecord& r : rows) r.delay_s = 3.5;
    SequenceDataset ds = build_sequences(rows, {"delay"}, 3);
    split(ds, SplitScheme::lstm_80_20, 7);
    normalize(ds);
    CHECK(ds.norm.sd[0] == 1e-8);
    for (double v : ds.x) CHECK(v == 0.0);
}

TEST_CASE("normalize requires a training split") {
    SequenceDataset ds = build_sequences(synth_rows(1, 5, 0, 23), {"speed"}, 3);
    CHECK_THROWS(normalize(ds));
}

TEST_CASE("split scheme names round-trip") {
    for (SplitScheme s : {SplitScheme::lstm_80_20, SplitScheme::cluster_70_10_20,
                          SplitScheme::arima_70_30})
        CHECK(split_scheme_from_string(to_string(s)) == s);
    CHECK_THROWS(split_scheme_from_string("nope"));
}
