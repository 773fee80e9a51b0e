#pragma once

#include <map>
#include <string>
#include <vector>

#include "aquacal/common.hpp"
#include "aquacal/model.hpp"

namespace aquacal {

inline constexpr double kGravity = 9.80665;        // m/s^2
inline constexpr double kViscosity = 1.004e-6;     // m^2/s, water at 20 C

struct ResidualReport {
    double max_mass_residual_lps = 0.0;
    double mean_mass_residual_lps = 0.0;
    double max_energy_residual_m = 0.0;
};

struct HydraulicState {
    std::map<std::string, double> node_heads;      // every node, m
    std::map<std::string, double> node_pressures;  // junctions, m (head - elevation)
    std::map<std::string, double> link_flows;      // pipes + valves, L/s, positive from->to
    std::map<std::string, double> emitter_flows;   // junctions, L/s
    int iterations = 0;
    bool converged = false;
    ResidualReport residuals;
};

struct SimulationResult {
    std::vector<double> timestamps; // s, strictly increasing
    std::vector<HydraulicState> states;
};

struct SensorSet {
    std::vector<std::string> flow_sensors;      // pipe ids
    std::vector<std::string> pressure_sensors;  // junction ids
    std::vector<std::string> holdout_flow;
    std::vector<std::string> holdout_pressure;
};

// Thrown when a steady solve cannot produce a converged state; carries the
// residual report of the final iterate and, in EPS, the offending timestamp.
class SolveFailure : public ModelError {
public:
    SolveFailure(const std::string& what, ResidualReport report, double time_s)
        : ModelError(what), report_(report), time_s_(time_s) {}
    const ResidualReport& report() const { return report_; }
    double time_s() const { return time_s_; }

private:
    ResidualReport report_;
    double time_s_;
};

// Signed head loss in m for a pipe at flow_lps; sign(h) = sign(Q).
double pipe_headloss(const Pipe& pipe, double flow_lps, const HydraulicOptions& options);
// Valves contribute the minor-loss term only.
double valve_headloss(const Valve& valve, double flow_lps);

// Leak outflow q = coeff * p^gamma for p > 0, else 0. L/s.
double emitter_flow(double pressure_m, double coeff, double exponent);

// Demand-driven steady state via Newton on junction heads. demand_multiplier
// scales every junction's base demand; head_multiplier scales reservoir heads.
// Non-convergence is reported through the returned flags, not thrown.
HydraulicState solve_steady(const NetworkModel& model,
                            const std::map<std::string, double>& demand_multipliers = {},
                            const std::map<std::string, double>& head_multipliers = {});

// Quasi-static sequence at t = 0, step, ..., duration - step with pattern
// multipliers applied per timestamp. Throws SolveFailure (with the timestamp)
// if any step fails to converge.
SimulationResult simulate_eps(const NetworkModel& model, double duration_s, double step_s);
SimulationResult simulate_eps(const NetworkModel& model); // options-driven horizon

// Per-sensor series aligned to result.timestamps. Flow sensors read the
// signed link flow in the pipe's from->to direction.
struct ObservationSet {
    std::vector<double> timestamps;
    std::map<std::string, std::vector<double>> flow;     // pipe id -> L/s
    std::map<std::string, std::vector<double>> pressure; // junction id -> m
};
ObservationSet extract_observations(const SimulationResult& result, const SensorSet& sensors,
                                    bool include_holdout = false);

// CSV export, header `time_s,element_kind,element_id,quantity,value`.
std::string simulation_to_csv(const SimulationResult& result);

} // namespace aquacal
