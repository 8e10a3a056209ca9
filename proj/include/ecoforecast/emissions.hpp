#pragma once

// VSP-based CO2eq emission model: per-second vehicle specific power,
// operating-mode binning, rate lookup, and link-interval aggregation.

#include <string>
#include <vector>

#include "ecoforecast/traffic_sim.hpp"

namespace ecoforecast {

/// Road-load coefficients and mass for the single modeled vehicle class.
/// Defaults are the published MOVES light-duty values.
struct VehicleSpec {
    double mass_mg = 1.4788;   // Mg
    double coef_a = 0.156461;  // kW*s/m
    double coef_b = 0.00200193;   // kW*s^2/m^2
    double coef_c = 0.000492646;  // kW*s^3/m^3
};

struct OpModeBin {
    std::string id;
    double v_lo = 0.0;  // m/s, inclusive
    double v_hi = 0.0;  // m/s, exclusive
    double vsp_lo = 0.0;  // kW/Mg, inclusive
    double vsp_hi = 0.0;  // kW/Mg, exclusive
    double rate_gps = 0.0;

    bool operator==(const OpModeBin&) const = default;
};

/// Ordered bin list. The "braking" bin is selected by deceleration and sits
/// outside the speed x VSP plane; the remaining bins (idle included) must
/// tile the plane with half-open [lo, hi) rectangles.
class OpModeTable {
public:
    explicit OpModeTable(std::vector<OpModeBin> bins);

    const std::vector<OpModeBin>& bins() const { return bins_; }
    const OpModeBin& braking() const { return bins_[braking_index_]; }

    /// Plane lookup by speed and VSP; braking is never returned.
    const OpModeBin& locate(double v_mps, double vsp_kw_mg) const;

    bool operator==(const OpModeTable& other) const {
        return bins_ == other.bins_;
    }

private:
    std::vector<OpModeBin> bins_;
    std::size_t braking_index_ = 0;
};

/// Deceleration at or beyond this marks the braking operating mode.
constexpr double kBrakingDecel = -0.894;  // m/s^2

OpModeTable default_opmode_table();
OpModeTable opmode_table_from_csv(const std::string& text);
std::string opmode_table_to_csv(const OpModeTable& table);

/// Vehicle specific power in kW/Mg: (A*v + B*v^2 + C*v^3 + m*v*a)/m.
double vsp(double v_mps, double a_mps2, const VehicleSpec& spec);

/// Plane lookup only (speed and VSP); see classify for the braking rule.
const OpModeBin& operating_mode(double v_mps, double vsp_kw_mg,
                                const OpModeTable& table);

/// Full operating-mode rule: braking when a <= kBrakingDecel, otherwise the
/// speed x VSP plane bin.
const OpModeBin& classify(double v_mps, double a_mps2, double vsp_kw_mg,
                          const OpModeTable& table);

struct EmissionRecord {
    int t_sec = 0;
    int vehicle_id = 0;
    int link_id = 0;
    double speed_mps = 0.0;
    double accel_mps2 = 0.0;
    double vsp = 0.0;
    std::string bin_id;
    double rate_gps = 0.0;

    bool operator==(const EmissionRecord&) const = default;
};

/// Attaches VSP, operating mode, and emission rate to every record.
std::vector<EmissionRecord> annotate(const std::vector<VehicleRecord>& records,
                                     const VehicleSpec& spec,
                                     const OpModeTable& table);

/// Total grams emitted on the link in [t0, t1) divided by the interval
/// length; 0 when no vehicle was present.
double link_ghg_er(const std::vector<EmissionRecord>& records, int link_id,
                   int t0, int t1);

std::string emissions_to_csv(const std::vector<EmissionRecord>& records);
std::vector<EmissionRecord> emissions_from_csv(const std::string& text);

}  // namespace ecoforecast
