#pragma once

// Second-by-second microsimulation: IDM car following on network links,
// dynamic shortest-path routing, and scenario demand generation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecoforecast/road_network.hpp"

namespace ecoforecast {

enum class DepartureDistribution {
    exponential,
    uniform,
    normal,
};

DepartureDistribution departure_distribution_from_string(const std::string& s);
const char* to_string(DepartureDistribution d);

struct OdPair {
    int origin = 0;
    int destination = 0;
    double weight = 0.0;
};

struct DemandScenario {
    double demand_factor = 1.0;
    int n_vehicles = 1;
    DepartureDistribution departure_distribution = DepartureDistribution::uniform;
    double horizon_s = 3600.0;
    std::vector<OdPair> od_pairs;
};

struct IdmParams {
    double desired_speed_factor = 1.0;
    double max_accel = 1.5;         // a, m/s^2
    double comfortable_decel = 2.0; // b, m/s^2
    double min_gap = 2.0;           // s0, m
    double headway = 1.5;           // T, s
    double exponent = 4.0;          // delta
    double decel_cap = 6.0;         // hard braking bound, default 3b
};

struct VehicleRecord {
    int t_sec = 0;
    int vehicle_id = 0;
    int link_id = 0;
    double speed_mps = 0.0;
    double accel_mps2 = 0.0;

    bool operator==(const VehicleRecord&) const = default;
};

struct SimResult {
    std::vector<VehicleRecord> records;
    int end_time_s = 0;
    int vehicles_arrived = 0;
    int vehicles_unarrived = 0;  // > 0 only when the hard time cap fired
};

/// Departure times in [0, horizon], sorted ascending, n_vehicles entries.
/// exponential: arrival process with rate n/horizon, times past the horizon
/// clamped to it. uniform: iid over [0, horizon]. normal: iid with mean
/// horizon/2 and sd horizon/6, clamped to [0, horizon].
std::vector<double> sample_departures(const DemandScenario& scenario,
                                      std::uint64_t seed);

/// IDM acceleration for a vehicle at speed v with desired speed v0, gap s to
/// its leader and closing speed dv. Leaderless vehicles pass s = +infinity,
/// dv = 0. A non-positive gap with a leader present brakes at -decel_cap.
/// The result is clamped to [-decel_cap, +inf).
double idm_acceleration(double v, double v0, double s, double dv,
                        const IdmParams& p);

/// Minimum-cost path from origin to destination under the given link travel
/// times. Among equal-cost paths the lexicographically smallest link-id
/// sequence is returned. travel_times must cover every link with a positive
/// time.
std::vector<int> route(const Network& net, int origin, int destination,
                       const std::map<int, double>& travel_times);

/// Full scenario run; deterministic in (network, scenario, idm, seed).
/// Terminates when all vehicles arrive or at the hard cap of 10x horizon,
/// reporting still-running vehicles in vehicles_unarrived.
SimResult run_scenario(const Network& net, const DemandScenario& scenario,
                       const IdmParams& idm, int reroute_interval_s,
                       std::uint64_t seed);

std::string records_to_csv(const std::vector<VehicleRecord>& records);
std::vector<VehicleRecord> records_from_csv(const std::string& text);

/// Stepwise simulation driver. run_scenario is a thin loop over this; the
/// class is exposed so tests can stage hand-built situations.
class Simulation {
public:
    Simulation(const Network& net, const IdmParams& idm,
               int reroute_interval_s);

    /// Queues a vehicle that will enter the network at depart_s.
    void add_vehicle(int vehicle_id, int origin, int destination,
                     double depart_s);

    /// Places a vehicle directly on a link (test scaffolding). remaining_path
    /// lists the links to traverse after the current one. Frozen vehicles
    /// never move and act as fixed obstacles.
    void place_vehicle(int vehicle_id, int link_id, double position_m,
                       double speed_mps, std::vector<int> remaining_path,
                       bool frozen = false);

    /// Advances one second: reroute (on the interval), departures, IDM
    /// accelerations, per-second records, motion, link transitions, arrivals.
    void step();

    int clock() const { return clock_; }
    bool idle() const { return pending_.empty() && active_.empty(); }
    int pending_count() const { return static_cast<int>(pending_.size()); }
    int active_count() const { return static_cast<int>(active_.size()); }
    int departed_count() const { return departed_; }
    int arrived_count() const { return arrived_; }
    const std::vector<VehicleRecord>& records() const { return records_; }

    bool vehicle_active(int vehicle_id) const;
    double vehicle_position(int vehicle_id) const;
    double vehicle_speed(int vehicle_id) const;
    int vehicle_link(int vehicle_id) const;

    /// Current link travel times: length / max(crawl, space-mean speed of
    /// vehicles now on the link), free-flow time when empty.
    std::map<int, double> current_travel_times() const;

private:
    struct Vehicle {
        int id = 0;
        int link = 0;
        int lane = 0;
        double pos = 0.0;
        double speed = 0.0;
        double accel = 0.0;
        std::vector<int> path;  // links after the current one
        int destination = 0;
        bool frozen = false;
    };
    struct Pending {
        int id = 0;
        int origin = 0;
        int destination = 0;
        double depart = 0.0;
    };

    const Network& net_;
    IdmParams idm_;
    int reroute_interval_;
    int clock_ = 0;
    int departed_ = 0;
    int arrived_ = 0;
    std::map<int, Vehicle> active_;
    std::vector<Pending> pending_;  // sorted by (depart, id)
    std::map<int, int> entry_counter_;
    std::vector<VehicleRecord> records_;

    const Vehicle* find(int vehicle_id) const;
    bool lane_admits(int link_id, int lane, double entry_pos) const;
    std::optional<int> pick_entry_lane(int link_id, double entry_pos);
    bool downstream_blocked(const Vehicle& v) const;
    void reroute_all();
    void process_departures();
};

}  // namespace ecoforecast
