#include "ecoforecast/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "ecoforecast/io.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast {

namespace {

constexpr double kCrawlSpeed = 1.0;     // m/s floor for travel-time estimates
constexpr double kMinSeparation = 0.1;  // m, absolute anti-pass bound

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("traffic_sim: " + msg);
}

}  // namespace

DepartureDistribution departure_distribution_from_string(const std::string& s) {
    if (s == "exponential") return DepartureDistribution::exponential;
    if (s == "uniform") return DepartureDistribution::uniform;
    if (s == "normal") return DepartureDistribution::normal;
    fail("unknown departure distribution '" + s + "'");
}

const char* to_string(DepartureDistribution d) {
    switch (d) {
        case DepartureDistribution::exponential:
            return "exponential";
        case DepartureDistribution::uniform:
            return "uniform";
        default:
            return "normal";
    }
}

std::vector<double> sample_departures(const DemandScenario& scenario,
                                      std::uint64_t seed) {
    if (scenario.n_vehicles < 1) fail("scenario needs at least one vehicle");
    if (!(scenario.horizon_s > 0.0)) fail("scenario horizon must be positive");
    const int n = scenario.n_vehicles;
    const double h = scenario.horizon_s;
    rng::Engine eng(rng::derive_seed(seed, "departures", 0));
    std::vector<double> times;
    times.reserve(n);
    switch (scenario.departure_distribution) {
        case DepartureDistribution::exponential: {
            // Arrival process with rate n/h; the expected span of n arrivals
            // is exactly the horizon, and late stragglers clamp onto it.
            const double rate = n / h;
            double t = 0.0;
            for (int i = 0; i < n; ++i) {
                t += eng.exponential(rate);
                times.push_back(std::min(t, h));
            }
            break;
        }
        case DepartureDistribution::uniform:
            for (int i = 0; i < n; ++i) times.push_back(eng.uniform(0.0, h));
            break;
        case DepartureDistribution::normal:
            for (int i = 0; i < n; ++i) {
                const double t = eng.normal(h / 2.0, h / 6.0);
                times.push_back(std::clamp(t, 0.0, h));
            }
            break;
    }
    std::sort(times.begin(), times.end());
    return times;
}

double idm_acceleration(double v, double v0, double s, double dv,
                        const IdmParams& p) {
    if (!(v0 > 0.0)) fail("idm: desired speed must be positive");
    if (!(s > 0.0)) return -p.decel_cap;
    double interaction = 0.0;
    if (std::isfinite(s)) {
        const double s_star =
            p.min_gap + v * p.headway +
            v * dv / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel));
        interaction = (s_star / s) * (s_star / s);
    }
    const double a =
        p.max_accel * (1.0 - std::pow(v / v0, p.exponent) - interaction);
    return std::max(a, -p.decel_cap);
}

std::vector<int> route(const Network& net, int origin, int destination,
                       const std::map<int, double>& travel_times) {
    if (origin == destination) fail("route: origin equals destination");
    for (const Link& l : net.links()) {
        const auto it = travel_times.find(l.id);
        if (it == travel_times.end() || !(it->second > 0.0))
            fail("route: missing or non-positive travel time for link " +
                 std::to_string(l.id));
    }

    // Backward Dijkstra gives cost-to-destination per node; a forward greedy
    // walk then picks, at each node, the smallest link id that attains the
    // optimal cost, which yields the lexicographically smallest optimal path.
    const double inf = std::numeric_limits<double>::infinity();
    std::map<int, double> dist;
    for (int node : net.nodes()) dist[node] = inf;
    dist[destination] = 0.0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.emplace(0.0, destination);
    while (!heap.empty()) {
        const auto [d, node] = heap.top();
        heap.pop();
        if (d > dist[node]) continue;
        for (int link_id : net.arriving_links(node)) {
            const Link& l = net.link(link_id);
            const double candidate = travel_times.at(link_id) + d;
            if (candidate < dist[l.from_node]) {
                dist[l.from_node] = candidate;
                heap.emplace(candidate, l.from_node);
            }
        }
    }
    if (!(dist[origin] < inf)) fail("route: destination unreachable");

    std::vector<int> path;
    int node = origin;
    while (node != destination) {
        int chosen = -1;
        for (int link_id : net.out_links(node)) {
            const Link& l = net.link(link_id);
            if (travel_times.at(link_id) + dist[l.to_node] == dist[node]) {
                chosen = link_id;
                break;
            }
        }
        if (chosen < 0) fail("route: no optimal continuation");
        path.push_back(chosen);
        node = net.link(chosen).to_node;
    }
    return path;
}

Simulation::Simulation(const Network& net, const IdmParams& idm,
                       int reroute_interval_s)
    : net_(net), idm_(idm), reroute_interval_(reroute_interval_s) {
    if (reroute_interval_ < 1) fail("reroute interval must be >= 1 s");
}

void Simulation::add_vehicle(int vehicle_id, int origin, int destination,
                             double depart_s) {
    if (!net_.has_node(origin) || !net_.has_node(destination))
        fail("add_vehicle: unknown node");
    if (origin == destination) fail("add_vehicle: origin equals destination");
    pending_.push_back({vehicle_id, origin, destination, depart_s});
    std::sort(pending_.begin(), pending_.end(),
              [](const Pending& a, const Pending& b) {
                  if (a.depart != b.depart) return a.depart < b.depart;
                  return a.id < b.id;
              });
}

void Simulation::place_vehicle(int vehicle_id, int link_id, double position_m,
                               double speed_mps, std::vector<int> remaining_path,
                               bool frozen) {
    const Link& l = net_.link(link_id);
    Vehicle v;
    v.id = vehicle_id;
    v.link = link_id;
    v.lane = 0;
    v.pos = position_m;
    v.speed = speed_mps;
    v.path = std::move(remaining_path);
    v.destination =
        v.path.empty() ? l.to_node : net_.link(v.path.back()).to_node;
    v.frozen = frozen;
    active_.emplace(vehicle_id, std::move(v));
    ++departed_;
}

const Simulation::Vehicle* Simulation::find(int vehicle_id) const {
    const auto it = active_.find(vehicle_id);
    return it == active_.end() ? nullptr : &it->second;
}

bool Simulation::vehicle_active(int vehicle_id) const {
    return find(vehicle_id) != nullptr;
}

double Simulation::vehicle_position(int vehicle_id) const {
    const Vehicle* v = find(vehicle_id);
    if (!v) fail("vehicle not on network");
    return v->pos;
}

double Simulation::vehicle_speed(int vehicle_id) const {
    const Vehicle* v = find(vehicle_id);
    if (!v) fail("vehicle not on network");
    return v->speed;
}

int Simulation::vehicle_link(int vehicle_id) const {
    const Vehicle* v = find(vehicle_id);
    if (!v) fail("vehicle not on network");
    return v->link;
}

bool Simulation::lane_admits(int link_id, int lane, double entry_pos) const {
    for (const auto& [id, v] : active_) {
        if (v.link != link_id || v.lane != lane) continue;
        if (v.pos < entry_pos + idm_.min_gap) return false;
    }
    return true;
}

std::optional<int> Simulation::pick_entry_lane(int link_id, double entry_pos) {
    const int lanes = net_.link(link_id).lanes;
    const int start = entry_counter_[link_id] % lanes;
    for (int k = 0; k < lanes; ++k) {
        const int lane = (start + k) % lanes;
        if (lane_admits(link_id, lane, entry_pos)) {
            ++entry_counter_[link_id];
            return lane;
        }
    }
    return std::nullopt;
}

bool Simulation::downstream_blocked(const Vehicle& v) const {
    if (v.path.empty()) return false;
    const int next = v.path.front();
    const int lanes = net_.link(next).lanes;
    for (int lane = 0; lane < lanes; ++lane) {
        if (lane_admits(next, lane, 0.0)) return false;
    }
    return true;
}

std::map<int, double> Simulation::current_travel_times() const {
    std::map<int, double> acc_speed;
    std::map<int, int> counts;
    for (const auto& [id, v] : active_) {
        acc_speed[v.link] += v.speed;
        counts[v.link] += 1;
    }
    std::map<int, double> times;
    for (const Link& l : net_.links()) {
        const auto it = counts.find(l.id);
        const double mean_speed =
            it == counts.end() ? l.ffs_mps() : acc_speed[l.id] / it->second;
        times[l.id] = l.length_m / std::max(kCrawlSpeed, mean_speed);
    }
    return times;
}

void Simulation::reroute_all() {
    const std::map<int, double> times = current_travel_times();
    for (auto& [id, v] : active_) {
        if (v.frozen) continue;
        const int junction = net_.link(v.link).to_node;
        if (junction == v.destination) {
            v.path.clear();
        } else {
            v.path = route(net_, junction, v.destination, times);
        }
    }
}

void Simulation::process_departures() {
    if (pending_.empty() || pending_.front().depart > clock_) return;
    const std::map<int, double> times = current_travel_times();
    std::vector<Pending> still_waiting;
    for (const Pending& p : pending_) {
        if (p.depart > clock_) {
            still_waiting.push_back(p);
            continue;
        }
        std::vector<int> path = route(net_, p.origin, p.destination, times);
        const int first = path.front();
        const auto lane = pick_entry_lane(first, 0.0);
        if (!lane) {
            still_waiting.push_back(p);
            continue;
        }
        Vehicle v;
        v.id = p.id;
        v.link = first;
        v.lane = *lane;
        v.pos = 0.0;
        v.speed = 0.0;
        v.path.assign(path.begin() + 1, path.end());
        v.destination = p.destination;
        active_.emplace(p.id, std::move(v));
        ++departed_;
    }
    pending_ = std::move(still_waiting);
}

void Simulation::step() {
    if (clock_ > 0 && clock_ % reroute_interval_ == 0) reroute_all();
    process_departures();

    // Per-lane leader/follower ordering, front first.
    std::map<std::pair<int, int>, std::vector<Vehicle*>> lanes;
    for (auto& [id, v] : active_) lanes[{v.link, v.lane}].push_back(&v);
    for (auto& [key, list] : lanes) {
        std::sort(list.begin(), list.end(), [](const Vehicle* a,
                                               const Vehicle* b) {
            if (a->pos != b->pos) return a->pos > b->pos;
            return a->id < b->id;
        });
    }

    for (auto& [key, list] : lanes) {
        const Link& link = net_.link(key.first);
        const double v0 = link.ffs_mps() * idm_.desired_speed_factor;
        for (std::size_t i = 0; i < list.size(); ++i) {
            Vehicle& v = *list[i];
            if (v.frozen) {
                v.accel = 0.0;
                continue;
            }
            double gap = std::numeric_limits<double>::infinity();
            double dv = 0.0;
            if (i > 0) {
                const Vehicle& leader = *list[i - 1];
                gap = leader.pos - v.pos;
                dv = v.speed - leader.speed;
            } else if (downstream_blocked(v)) {
                // Stand-in for the rearmost queued vehicle one min-gap past
                // the link end: settles arrivals exactly at the boundary.
                gap = link.length_m + idm_.min_gap - v.pos;
                dv = v.speed;
            }
            v.accel = idm_acceleration(v.speed, v0, gap, dv, idm_);
        }
    }

    for (const auto& [id, v] : active_) {
        records_.push_back({clock_, v.id, v.link, v.speed, v.accel});
    }

    for (auto& [id, v] : active_) {
        if (v.frozen) continue;
        const Link& link = net_.link(v.link);
        const double v0 = link.ffs_mps() * idm_.desired_speed_factor;
        double next_speed = v.speed + v.accel;
        if (v.speed <= v0 && next_speed > v0) next_speed = v0;
        next_speed = std::max(0.0, next_speed);
        v.pos += 0.5 * (v.speed + next_speed);
        v.speed = next_speed;
    }

    // Anti-pass clamp: a follower can never end a step ahead of its leader.
    for (auto& [key, list] : lanes) {
        for (std::size_t i = 1; i < list.size(); ++i) {
            Vehicle& follower = *list[i];
            const Vehicle& leader = *list[i - 1];
            if (follower.pos > leader.pos - kMinSeparation) {
                follower.pos = std::max(0.0, leader.pos - kMinSeparation);
                follower.speed = 0.0;
            }
        }
    }

    // Link transitions and arrivals, in deterministic scan order.
    std::vector<int> order;
    order.reserve(active_.size());
    for (const auto& [id, v] : active_) order.push_back(id);
    std::sort(order.begin(), order.end(), [this](int a, int b) {
        const Vehicle& va = active_.at(a);
        const Vehicle& vb = active_.at(b);
        if (va.link != vb.link) return va.link < vb.link;
        if (va.lane != vb.lane) return va.lane < vb.lane;
        if (va.pos != vb.pos) return va.pos > vb.pos;
        return a < b;
    });
    for (int id : order) {
        auto it = active_.find(id);
        Vehicle& v = it->second;
        if (v.frozen) continue;
        const Link& link = net_.link(v.link);
        if (v.pos < link.length_m) continue;
        if (v.path.empty()) {
            active_.erase(it);
            ++arrived_;
            continue;
        }
        const int next = v.path.front();
        const Link& next_link = net_.link(next);
        const double residual =
            std::min(v.pos - link.length_m, next_link.length_m);
        const auto lane = pick_entry_lane(next, residual);
        if (lane) {
            v.link = next;
            v.lane = *lane;
            v.pos = residual;
            v.path.erase(v.path.begin());
        } else {
            v.pos = link.length_m;
            v.speed = 0.0;
        }
    }

    ++clock_;
}

SimResult run_scenario(const Network& net, const DemandScenario& scenario,
                       const IdmParams& idm, int reroute_interval_s,
                       std::uint64_t seed) {
    std::vector<OdPair> pairs;
    double weight_sum = 0.0;
    for (const OdPair& p : scenario.od_pairs) {
        if (p.weight < 0.0) fail("negative OD weight");
        if (p.weight == 0.0) continue;
        if (p.origin == p.destination) fail("OD pair with origin == destination");
        pairs.push_back(p);
        weight_sum += p.weight;
    }
    if (pairs.empty()) fail("scenario has no positive-weight OD pairs");
    if (std::abs(weight_sum - 1.0) > 1e-6)
        fail("OD weights must sum to 1");

    const std::vector<double> departures = sample_departures(scenario, seed);
    rng::Engine od_eng(rng::derive_seed(seed, "scenario_od", 0));

    Simulation sim(net, idm, reroute_interval_s);
    for (int i = 0; i < scenario.n_vehicles; ++i) {
        const double u = od_eng.uniform01() * weight_sum;
        double acc = 0.0;
        const OdPair* chosen = &pairs.back();
        for (const OdPair& p : pairs) {
            acc += p.weight;
            if (u < acc) {
                chosen = &p;
                break;
            }
        }
        sim.add_vehicle(i, chosen->origin, chosen->destination, departures[i]);
    }

    const int hard_cap = static_cast<int>(10.0 * scenario.horizon_s);
    while (!sim.idle() && sim.clock() < hard_cap) sim.step();

    SimResult result;
    result.records = sim.records();
    result.end_time_s = sim.clock();
    result.vehicles_arrived = sim.arrived_count();
    result.vehicles_unarrived = scenario.n_vehicles - sim.arrived_count();
    return result;
}

std::string records_to_csv(const std::vector<VehicleRecord>& records) {
    std::string out = "t_sec,vehicle_id,link_id,speed_mps,accel_mps2\n";
    for (const VehicleRecord& r : records) {
        out += std::to_string(r.t_sec) + "," + std::to_string(r.vehicle_id) +
               "," + std::to_string(r.link_id) + "," +
               io::fmt_double(r.speed_mps) + "," +
               io::fmt_double(r.accel_mps2) + "\n";
    }
    return out;
}

std::vector<VehicleRecord> records_from_csv(const std::string& text) {
    std::vector<VehicleRecord> records;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const std::string t = io::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (first) {
            first = false;
            if (t.rfind("t_sec,", 0) == 0) continue;
        }
        const std::vector<std::string> f = io::split(t, ',');
        if (f.size() != 5) fail("malformed vehicle record: " + t);
        VehicleRecord r;
        r.t_sec = io::parse_int(f[0]);
        r.vehicle_id = io::parse_int(f[1]);
        r.link_id = io::parse_int(f[2]);
        r.speed_mps = io::parse_double(f[3]);
        r.accel_mps2 = io::parse_double(f[4]);
        records.push_back(r);
    }
    return records;
}

}  // namespace ecoforecast
