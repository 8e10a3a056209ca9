#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "ecoforecast/road_network.hpp"
#include "ecoforecast/traffic_sim.hpp"

using namespace ecoforecast;

namespace {

// Long straight two-node corridor for staged car-following situations.
Network corridor(double length_m = 5000.0, double ffs = 60.0) {
    return load_network("node,0\nnode,1\nlink,1,0,1," + std::to_string(length_m) +
                        ",1," + std::to_string(ffs) + "\nlink,2,1,0," +
                        std::to_string(length_m) + ",1," + std::to_string(ffs) +
                        "\n");
}

}  // namespace

TEST_CASE("idm acceleration matches the frozen closed-form value") {
    // a [1 - (v/v0)^4 - ((s0 + vT + v dv / (2 sqrt(a b))) / s)^2]
    // at v=10, v0=16.67, s=30, dv=0 with default parameters.
    const IdmParams p;
    CHECK(idm_acceleration(10.0, 16.67, 30.0, 0.0, p) ==
          doctest::Approx(0.8240887756044265).epsilon(1e-15));
}

TEST_CASE("idm free road limit approaches max acceleration") {
    const IdmParams p;
    const double a = idm_acceleration(0.0, 16.67, 1e9, 0.0, p);
    CHECK(a == doctest::Approx(p.max_accel).epsilon(1e-6));
}

TEST_CASE("idm at the desired speed with a huge gap stops accelerating") {
    const IdmParams p;
    const double a = idm_acceleration(16.67, 16.67, 1e9, 0.0, p);
    CHECK(std::fabs(a) < 1e-6);
}

TEST_CASE("idm brakes at the cap for a non-positive gap") {
    const IdmParams p;
    CHECK(idm_acceleration(10.0, 16.67, 0.0, 0.0, p) == -p.decel_cap);
    CHECK(idm_acceleration(10.0, 16.67, -1.0, 0.0, p) == -p.decel_cap);
}

TEST_CASE("idm deceleration never exceeds the cap") {
    const IdmParams p;
    for (double v : {5.0, 10.0, 15.0})
        for (double s : {0.5, 2.0, 10.0, 50.0})
            for (double dv : {-5.0, 0.0, 5.0, 10.0}) {
                const double a = idm_acceleration(v, 16.67, s, dv, p);
                CHECK(a >= -p.decel_cap);
                CHECK(a <= p.max_accel);
            }
}

TEST_CASE("departure samples are sorted, in range, and seed stable") {
    DemandScenario sc;
    sc.n_vehicles = 500;
    sc.horizon_s = 3600.0;
    for (auto dist : {DepartureDistribution::exponential,
                      DepartureDistribution::uniform,
                      DepartureDistribution::normal}) {
        sc.departure_distribution = dist;
        const std::vector<double> t1 = sample_departures(sc, 99);
        const std::vector<double> t2 = sample_departures(sc, 99);
        CHECK(t1 == t2);
        CHECK(t1.size() == 500);
        for (std::size_t i = 0; i < t1.size(); ++i) {
            CHECK(t1[i] >= 0.0);
            CHECK(t1[i] <= sc.horizon_s);
            if (i) CHECK(t1[i] >= t1[i - 1]);
        }
    }
}

TEST_CASE("normal departures cluster near the midpoint") {
    DemandScenario sc;
    sc.n_vehicles = 2000;
    sc.horizon_s = 3600.0;
    sc.departure_distribution = DepartureDistribution::normal;
    const std::vector<double> t = sample_departures(sc, 5);
    double mean = 0.0;
    for (double x : t) mean += x;
    mean /= t.size();
    CHECK(mean == doctest::Approx(1800.0).epsilon(0.02));
}

TEST_CASE("a follower behind a fixed obstacle settles at the standstill gap") {
    // v = 0 closed-form equilibrium: accel = 0 exactly at s = s0.
    const Network net = corridor();
    const IdmParams p;
    Simulation sim(net, p, 3600);
    sim.place_vehicle(1, 1, 600.0, 0.0, {}, true);
    sim.place_vehicle(2, 1, 300.0, 10.0, {2, 1});
    for (int t = 0; t < 300; ++t) sim.step();
    REQUIRE(sim.vehicle_active(1));
    REQUIRE(sim.vehicle_active(2));
    CHECK(sim.vehicle_speed(2) < 0.01);
    const double gap = sim.vehicle_position(1) - sim.vehicle_position(2);
    CHECK(std::fabs(gap - p.min_gap) < 0.1);
}

TEST_CASE("closed-form equilibrium gap zeroes the idm acceleration") {
    // At speed v with zero closing rate, accel vanishes exactly at
    // s = (s0 + vT) / sqrt(1 - (v/v0)^4).
    const IdmParams p;
    const double v0 = 16.67;
    for (double v : {0.0, 2.0, 5.0, 10.0, 14.0}) {
        const double s_star = p.min_gap + v * p.headway;
        const double s_eq =
            s_star / std::sqrt(1.0 - std::pow(v / v0, p.exponent));
        CHECK(std::fabs(idm_acceleration(v, v0, s_eq, 0.0, p)) < 1e-9);
    }
}

TEST_CASE("a queue behind an obstacle stacks at the standstill gap") {
    const Network net = corridor();
    const IdmParams p;
    Simulation sim(net, p, 3600);
    sim.place_vehicle(1, 1, 1000.0, 0.0, {}, true);
    sim.place_vehicle(2, 1, 700.0, 12.0, {2, 1});
    sim.place_vehicle(3, 1, 650.0, 12.0, {2, 1});
    sim.place_vehicle(4, 1, 600.0, 12.0, {2, 1});
    for (int t = 0; t < 600; ++t) sim.step();
    for (int id : {2, 3, 4}) {
        REQUIRE(sim.vehicle_active(id));
        CHECK(sim.vehicle_speed(id) < 0.01);
    }
    for (int id : {2, 3}) {
        const double gap =
            sim.vehicle_position(id) - sim.vehicle_position(id + 1);
        CHECK(std::fabs(gap - p.min_gap) < 0.1);
    }
}

TEST_CASE("followers never overtake on a single lane") {
    const Network net = corridor();
    Simulation sim(net, IdmParams{}, 3600);
    // A slow leader and three eager followers stacked behind.
    sim.place_vehicle(1, 1, 500.0, 2.0, {2, 1}, true);
    sim.place_vehicle(2, 1, 450.0, 15.0, {2, 1});
    sim.place_vehicle(3, 1, 400.0, 15.0, {2, 1});
    sim.place_vehicle(4, 1, 350.0, 15.0, {2, 1});
    for (int t = 0; t < 300; ++t) {
        sim.step();
        std::map<int, std::vector<std::pair<double, int>>> by_link;
        for (int id : {1, 2, 3, 4}) {
            if (!sim.vehicle_active(id)) continue;
            by_link[sim.vehicle_link(id)].push_back(
                {sim.vehicle_position(id), id});
        }
        // Same order as placed: higher id means strictly further back.
        for (auto& [link, vehicles] : by_link)
            for (std::size_t i = 1; i < vehicles.size(); ++i)
                for (std::size_t j = 0; j < i; ++j)
                    if (vehicles[j].second < vehicles[i].second)
                        CHECK(vehicles[j].first > vehicles[i].first);
    }
}

TEST_CASE("run_scenario conserves vehicles and reports them all") {
    const Network net = generate_grid(3, 3, 400.0, {1}, {50.0}, 3);
    DemandScenario sc;
    sc.demand_factor = 1.0;
    sc.n_vehicles = 40;
    sc.departure_distribution = DepartureDistribution::uniform;
    sc.horizon_s = 300.0;
    sc.od_pairs = {{0, 8, 0.5}, {2, 6, 0.5}};
    const SimResult res = run_scenario(net, sc, IdmParams{}, 60, 77);
    CHECK(res.vehicles_arrived + res.vehicles_unarrived == 40);
    CHECK(res.vehicles_unarrived == 0);

    // Per-second activity counts from the records must never exceed the
    // fleet size, and every vehicle id must appear.
    std::set<int> seen;
    std::map<int, std::set<int>> at_time;
    for (const VehicleRecord& r : res.records) {
        seen.insert(r.vehicle_id);
        CHECK(net.has_link(r.link_id));
        const bool inserted = at_time[r.t_sec].insert(r.vehicle_id).second;
        CHECK(inserted);  // one record per vehicle-second
    }
    CHECK(seen.size() == 40);
}

TEST_CASE("run_scenario is bitwise deterministic in the seed") {
    const Network net = generate_grid(3, 3, 400.0, {1}, {50.0}, 3);
    DemandScenario sc;
    sc.n_vehicles = 25;
    sc.departure_distribution = DepartureDistribution::exponential;
    sc.horizon_s = 240.0;
    sc.od_pairs = {{0, 8, 1.0}};
    const SimResult a = run_scenario(net, sc, IdmParams{}, 60, 5);
    const SimResult b = run_scenario(net, sc, IdmParams{}, 60, 5);
    CHECK(a.records == b.records);
    CHECK(a.end_time_s == b.end_time_s);
}

TEST_CASE("vehicle records round-trip through csv") {
    const Network net = generate_grid(2, 2, 300.0, {1}, {40.0}, 1);
    DemandScenario sc;
    sc.n_vehicles = 10;
    sc.departure_distribution = DepartureDistribution::uniform;
    sc.horizon_s = 120.0;
    sc.od_pairs = {{0, 3, 1.0}};
    const SimResult res = run_scenario(net, sc, IdmParams{}, 60, 11);
    REQUIRE(!res.records.empty());
    CHECK(records_from_csv(records_to_csv(res.records)) == res.records);
}

TEST_CASE("route finds the shortest path by current travel times") {
    const Network net = generate_grid(3, 3, 400.0, {1}, {50.0}, 3);
    std::map<int, double> tt;
    for (const Link& l : net.links()) tt[l.id] = l.length_m / l.ffs_mps();
    const std::vector<int> path = route(net, 0, 8, tt);
    REQUIRE(!path.empty());
    // The path must start at node 0, end at node 8, and chain contiguously.
    CHECK(net.link(path.front()).from_node == 0);
    CHECK(net.link(path.back()).to_node == 8);
    for (std::size_t i = 1; i < path.size(); ++i)
        CHECK(net.link(path[i - 1]).to_node == net.link(path[i]).from_node);
    // On a uniform grid the 0 -> 8 route is 4 hops.
    CHECK(path.size() == 4);
}
