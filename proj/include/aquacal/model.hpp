#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aquacal/common.hpp"

namespace aquacal {

enum class HeadlossFormula { darcy_weisbach, hazen_williams };
enum class LinkStatus { open, closed };

struct HydraulicOptions {
    HeadlossFormula headloss = HeadlossFormula::darcy_weisbach;
    double duration_s = 86400.0;
    double hydraulic_step_s = 3600.0;
    double pattern_step_s = 3600.0;
    double emitter_exponent = 0.5;
};

struct Junction {
    std::string id;
    double elevation_m = 0.0;
    double base_demand_lps = 0.0;
    std::string pattern_id;            // empty = constant demand
    double emitter_coeff = 0.0;        // L/s per m^gamma
    std::string zone;                  // from [TAGS]
    std::optional<double> age_years;   // from [TAGS]
};

struct Reservoir {
    std::string id;
    double head_m = 0.0;
    std::string head_pattern;          // empty = constant head
};

struct Pipe {
    std::string id;
    std::string from;
    std::string to;
    double length_m = 0.0;
    double diameter_mm = 0.0;
    double roughness = 0.0;            // mm (D-W epsilon) or C (H-W), per options
    double minor_loss_k = 0.0;
    LinkStatus status = LinkStatus::open;
    std::string material;              // from [TAGS]
    std::optional<double> age_years;   // from [TAGS]
};

struct Valve {
    std::string id;
    std::string from;
    std::string to;
    double diameter_mm = 0.0;
    std::string kind = "TCV";          // label only; all valves behave as throttles
    double loss_coeff_k = 0.0;
    LinkStatus status = LinkStatus::open;
};

// Immutable after construction; calibration overlays copy-on-write via
// apply_parameters, so one model may back many concurrent solvers.
struct NetworkModel {
    std::string title;
    std::vector<Junction> junctions;
    std::vector<Reservoir> reservoirs;
    std::vector<Pipe> pipes;
    std::vector<Valve> valves;
    std::map<std::string, std::vector<double>> patterns;
    HydraulicOptions options;
    std::map<std::string, std::pair<double, double>> coordinates;

    const Junction* find_junction(const std::string& id) const;
    const Reservoir* find_reservoir(const std::string& id) const;
    const Pipe* find_pipe(const std::string& id) const;
    const Valve* find_valve(const std::string& id) const;
    Junction* find_junction(const std::string& id);
    Pipe* find_pipe(const std::string& id);
    Valve* find_valve(const std::string& id);
    bool has_node(const std::string& id) const;
};

// Empty result iff every type invariant and the source-connectivity
// requirement hold; downstream modules may then assume a solvable model.
std::vector<Diagnostic> validate(const NetworkModel& model);

} // namespace aquacal
