#include "ecoforecast/emissions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ecoforecast/io.hpp"

namespace ecoforecast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("emissions: " + msg);
}

// Probe coordinates for the tiling check: midpoints between consecutive
// distinct edges plus points beyond the extremes.
std::vector<double> probes(const std::set<double>& edges) {
    std::vector<double> sorted;
    for (double e : edges)
        if (std::isfinite(e)) sorted.push_back(e);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    if (sorted.empty()) return {0.0};
    out.push_back(sorted.front() - 1.0);
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
        out.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    out.push_back(sorted.back() + 1.0);
    // Edge values themselves, to exercise the half-open convention.
    out.insert(out.end(), sorted.begin(), sorted.end());
    return out;
}

}  // namespace

OpModeTable::OpModeTable(std::vector<OpModeBin> bins) : bins_(std::move(bins)) {
    if (bins_.empty()) fail("empty operating-mode table");
    std::set<std::string> ids;
    bool has_braking = false;
    for (std::size_t i = 0; i < bins_.size(); ++i) {
        const OpModeBin& b = bins_[i];
        if (b.id.empty()) fail("bin with empty id");
        if (!ids.insert(b.id).second) fail("duplicate bin id '" + b.id + "'");
        if (!(b.rate_gps > 0.0)) fail("bin '" + b.id + "' has non-positive rate");
        if (b.id == "braking") {
            has_braking = true;
            braking_index_ = i;
            continue;
        }
        if (!(b.v_lo < b.v_hi) || !(b.vsp_lo < b.vsp_hi))
            fail("bin '" + b.id + "' has an empty range");
        if (b.v_lo < 0.0) fail("bin '" + b.id + "' has negative speed bound");
    }
    if (!has_braking) fail("table lacks the braking bin");
    if (!ids.count("idle")) fail("table lacks the idle bin");

    std::set<double> v_edges;
    std::set<double> p_edges;
    for (const OpModeBin& b : bins_) {
        if (b.id == "braking") continue;
        v_edges.insert(b.v_lo);
        v_edges.insert(b.v_hi);
        p_edges.insert(b.vsp_lo);
        p_edges.insert(b.vsp_hi);
    }
    for (double v : probes(v_edges)) {
        if (v < 0.0) continue;
        for (double p : probes(p_edges)) {
            int matches = 0;
            for (const OpModeBin& b : bins_) {
                if (b.id == "braking") continue;
                if (v >= b.v_lo && v < b.v_hi && p >= b.vsp_lo && p < b.vsp_hi)
                    ++matches;
            }
            if (matches != 1)
                fail("speed/VSP plane not tiled at v=" + io::fmt_double(v) +
                     " vsp=" + io::fmt_double(p) +
                     " (matches=" + std::to_string(matches) + ")");
        }
    }

    // Rates must be non-decreasing in VSP within each speed class.
    std::map<std::pair<double, double>, std::vector<const OpModeBin*>> classes;
    for (const OpModeBin& b : bins_) {
        if (b.id == "braking" || b.id == "idle") continue;
        classes[{b.v_lo, b.v_hi}].push_back(&b);
    }
    for (auto& [range, members] : classes) {
        std::sort(members.begin(), members.end(),
                  [](const OpModeBin* a, const OpModeBin* b) {
                      return a->vsp_lo < b->vsp_lo;
                  });
        for (std::size_t i = 1; i < members.size(); ++i) {
            if (members[i]->rate_gps < members[i - 1]->rate_gps)
                fail("rates not monotone in VSP between bins '" +
                     members[i - 1]->id + "' and '" + members[i]->id + "'");
        }
    }
}

const OpModeBin& OpModeTable::locate(double v_mps, double vsp_kw_mg) const {
    if (v_mps < 0.0) fail("negative speed");
    for (const OpModeBin& b : bins_) {
        if (b.id == "braking") continue;
        if (v_mps >= b.v_lo && v_mps < b.v_hi && vsp_kw_mg >= b.vsp_lo &&
            vsp_kw_mg < b.vsp_hi)
            return b;
    }
    fail("no bin for v=" + io::fmt_double(v_mps) +
         " vsp=" + io::fmt_double(vsp_kw_mg));
}

OpModeTable default_opmode_table() {
    // 23 bins: idle, braking, and 3 speed classes x 7 VSP classes with
    // synthetic rates that grow with both speed and engine load. The speed
    // cutpoints are the MOVES 25/50 mph boundaries in m/s.
    const double v1 = 1.0;
    const double v2 = 11.176;
    const double v3 = 22.352;
    const double vsp_edges[8] = {-kInf, 0.0, 3.0, 6.0, 9.0, 12.0, 18.0, kInf};
    const double rates[3][7] = {
        {0.5, 0.9, 1.4, 2.0, 2.7, 3.5, 4.5},
        {0.7, 1.2, 1.9, 2.8, 3.8, 5.0, 6.2},
        {1.0, 1.6, 2.5, 3.6, 4.8, 6.4, 8.0},
    };
    const double v_edges[4] = {v1, v2, v3, kInf};

    std::vector<OpModeBin> bins;
    bins.push_back({"idle", 0.0, v1, -kInf, kInf, 0.3});
    bins.push_back({"braking", 0.0, kInf, -kInf, kInf, 0.45});
    for (int s = 0; s < 3; ++s) {
        for (int k = 0; k < 7; ++k) {
            OpModeBin b;
            b.id = std::to_string(10 * (s + 1) + k);
            b.v_lo = v_edges[s];
            b.v_hi = v_edges[s + 1];
            b.vsp_lo = vsp_edges[k];
            b.vsp_hi = vsp_edges[k + 1];
            b.rate_gps = rates[s][k];
            bins.push_back(b);
        }
    }
    return OpModeTable(std::move(bins));
}

OpModeTable opmode_table_from_csv(const std::string& text) {
    std::vector<OpModeBin> bins;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const std::string t = io::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (first) {
            first = false;
            if (t.rfind("bin_id,", 0) == 0) continue;
        }
        const std::vector<std::string> f = io::split(t, ',');
        if (f.size() != 6) fail("malformed operating-mode row: " + t);
        OpModeBin b;
        b.id = f[0];
        b.v_lo = io::parse_double(f[1]);
        b.v_hi = io::parse_double(f[2]);
        b.vsp_lo = io::parse_double(f[3]);
        b.vsp_hi = io::parse_double(f[4]);
        b.rate_gps = io::parse_double(f[5]);
        bins.push_back(b);
    }
    return OpModeTable(std::move(bins));
}

std::string opmode_table_to_csv(const OpModeTable& table) {
    std::string out = "bin_id,v_lo_mps,v_hi_mps,vsp_lo,vsp_hi,rate_gps\n";
    for (const OpModeBin& b : table.bins()) {
        out += b.id + "," + io::fmt_double(b.v_lo) + "," +
               io::fmt_double(b.v_hi) + "," + io::fmt_double(b.vsp_lo) + "," +
               io::fmt_double(b.vsp_hi) + "," + io::fmt_double(b.rate_gps) +
               "\n";
    }
    return out;
}

double vsp(double v_mps, double a_mps2, const VehicleSpec& spec) {
    if (v_mps < 0.0) fail("negative speed");
    if (!(spec.mass_mg > 0.0)) fail("non-positive vehicle mass");
    const double v = v_mps;
    return (spec.coef_a * v + spec.coef_b * v * v + spec.coef_c * v * v * v +
            spec.mass_mg * v * a_mps2) /
           spec.mass_mg;
}

const OpModeBin& operating_mode(double v_mps, double vsp_kw_mg,
                                const OpModeTable& table) {
    return table.locate(v_mps, vsp_kw_mg);
}

const OpModeBin& classify(double v_mps, double a_mps2, double vsp_kw_mg,
                          const OpModeTable& table) {
    if (a_mps2 <= kBrakingDecel) return table.braking();
    return table.locate(v_mps, vsp_kw_mg);
}

std::vector<EmissionRecord> annotate(const std::vector<VehicleRecord>& records,
                                     const VehicleSpec& spec,
                                     const OpModeTable& table) {
    std::vector<EmissionRecord> out;
    out.reserve(records.size());
    for (const VehicleRecord& r : records) {
        EmissionRecord e;
        e.t_sec = r.t_sec;
        e.vehicle_id = r.vehicle_id;
        e.link_id = r.link_id;
        e.speed_mps = r.speed_mps;
        e.accel_mps2 = r.accel_mps2;
        e.vsp = vsp(r.speed_mps, r.accel_mps2, spec);
        const OpModeBin& bin = classify(r.speed_mps, r.accel_mps2, e.vsp, table);
        e.bin_id = bin.id;
        e.rate_gps = bin.rate_gps;
        out.push_back(std::move(e));
    }
    return out;
}

double link_ghg_er(const std::vector<EmissionRecord>& records, int link_id,
                   int t0, int t1) {
    if (t1 <= t0) fail("empty interval");
    double grams = 0.0;
    for (const EmissionRecord& r : records) {
        if (r.link_id == link_id && r.t_sec >= t0 && r.t_sec < t1)
            grams += r.rate_gps;
    }
    return grams / (t1 - t0);
}

std::string emissions_to_csv(const std::vector<EmissionRecord>& records) {
    std::string out =
        "t_sec,vehicle_id,link_id,speed_mps,accel_mps2,vsp,bin_id,rate_gps\n";
    for (const EmissionRecord& r : records) {
        out += std::to_string(r.t_sec) + "," + std::to_string(r.vehicle_id) +
               "," + std::to_string(r.link_id) + "," +
               io::fmt_double(r.speed_mps) + "," +
               io::fmt_double(r.accel_mps2) + "," + io::fmt_double(r.vsp) +
               "," + r.bin_id + "," + io::fmt_double(r.rate_gps) + "\n";
    }
    return out;
}

std::vector<EmissionRecord> emissions_from_csv(const std::string& text) {
    std::vector<EmissionRecord> records;
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
        if (f.size() != 8) fail("malformed emission record: " + t);
        EmissionRecord r;
        r.t_sec = io::parse_int(f[0]);
        r.vehicle_id = io::parse_int(f[1]);
        r.link_id = io::parse_int(f[2]);
        r.speed_mps = io::parse_double(f[3]);
        r.accel_mps2 = io::parse_double(f[4]);
        r.vsp = io::parse_double(f[5]);
        r.bin_id = f[6];
        r.rate_gps = io::parse_double(f[7]);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace ecoforecast
