#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aquacal/features.hpp"
#include "aquacal/hydraulics.hpp"
#include "aquacal/model.hpp"
#include "aquacal/neat.hpp"
#include "aquacal/params.hpp"

namespace aquacal {

struct MeasurementSeries {
    std::vector<double> times;  // s, strictly increasing
    std::vector<double> values; // L/s for flow, m for pressure
};

struct MeasurementSet {
    std::map<std::string, MeasurementSeries> flow;     // by pipe id
    std::map<std::string, MeasurementSeries> pressure; // by junction id

    bool empty() const { return flow.empty() && pressure.empty(); }
};

// CSV with header `time_s,element_kind,element_id,quantity,value`;
// quantity flow_lps (element_kind pipe) or pressure_m (element_kind junction).
MeasurementSet parse_measurements_csv(const std::string& text);
std::string measurements_to_csv(const MeasurementSet& set);

// Lines `sensor|holdout flow|pressure <element-id>`; '#' comments.
SensorSet parse_sensor_file(const std::string& text);
std::string sensor_file_text(const SensorSet& sensors);

// Turns simulated sensor series into a measurement set (used when
// synthesizing benchmarks from a known-truth model).
MeasurementSet observations_to_measurements(const ObservationSet& obs);

enum class ObjectiveKind { rmse, mae, nse };
enum class Normalization { raw, per_sensor_std };

struct Objective {
    ObjectiveKind kind = ObjectiveKind::rmse;
    Normalization normalization = Normalization::raw;
};

const char* to_string(ObjectiveKind k);
ObjectiveKind objective_kind_from_string(const std::string& s);
const char* to_string(Normalization n);
Normalization normalization_from_string(const std::string& s);

// Compares simulated series against measurements, sampling the simulation at
// each sensor's measurement times (which must coincide with simulation
// timestamps). per_sensor_std divides residuals by max(std(obs), 1e-6);
// nse is scale-invariant, so normalization does not affect it. rmse and mae
// pool residuals across sensors; nse is computed per sensor, averaged, and
// negated so that every objective is minimized.
double evaluate_objective(const ObservationSet& sim, const MeasurementSet& obs,
                          const Objective& objective);

enum class Phase { flow, pressure };
const char* to_string(Phase p);
Group phase_group(Phase p);

// Distinct parameter kinds of a spec list in ParameterKind declaration order;
// these are the genome's output slots.
std::vector<ParameterKind> output_kinds(const std::vector<ParameterSpec>& specs);
// Genome input width for a spec list: the widest feature vector among the
// element kinds present (narrower vectors are zero-padded at activation).
int feature_width(const std::vector<ParameterSpec>& specs, const FeatureSchema& schema);

// One activation per element; the output slot for each spec's parameter kind
// is clamped to [-1, 1] and mapped affinely onto [lo, hi].
std::vector<double> decode(const Genome& genome, const std::vector<ParameterSpec>& specs,
                           const FeatureSet& features);

// Objective of one genome with the other group frozen: overwrite the phase's
// slots in `frozen` with the decoded values, apply, simulate, and score the
// phase's calibration sensors only. A non-converged simulation returns the
// penalty 1e6 + mean mass residual instead of throwing.
double phase_fitness(const Genome& genome, Phase phase, const ParameterVector& frozen,
                     const NetworkModel& model, const ParameterSpace& space,
                     const FeatureSet& features, const MeasurementSet& measurements,
                     const SensorSet& sensors, const Objective& objective);

struct LoopConfig {
    int outer_iterations = 5;
    double improvement_tol = 0.01; // relative, per full flow+pressure pass
    Objective objective;           // per-phase fitness objective
    int threads = 1;
};

struct CalibrationRun {
    std::optional<Genome> flow_genome;
    std::optional<Genome> pressure_genome;
    // Best-ever and population-mean fitness per generation, one inner vector
    // per outer iteration.
    std::vector<std::vector<double>> flow_history;
    std::vector<std::vector<double>> pressure_history;
    std::vector<std::vector<double>> flow_mean_history;
    std::vector<std::vector<double>> pressure_mean_history;
    ParameterVector final_vector;
    double calibration_objective = 0.0; // combined, per-sensor-std
    double validation_objective = std::numeric_limits<double>::quiet_NaN();
    std::size_t simulation_count = 0;
    double wall_time_s = 0.0;
    int outer_iterations = 0;
    std::vector<Diagnostic> warnings;
};

// Sequential two-phase loop: evolve the flow genome against flow sensors with
// the pressure parameters frozen, then the converse, repeating until the
// combined objective (both sensor kinds, per-sensor-std) improves by less
// than improvement_tol over a pass, the NEAT fitness_threshold is reached, or
// the outer-iteration cap is hit. Frozen values start at prior midpoints; the
// reported vector starts from the base model's own values (clamped into
// bounds) and only ever improves. Optional seed genomes enter generation 0 of
// the first outer iteration; later iterations reseed from the phase's best.
CalibrationRun calibrate(const NetworkModel& model, const ParameterSpace& space,
                         const MeasurementSet& measurements, const SensorSet& sensors,
                         const NeatConfig& neat_config, const LoopConfig& loop,
                         const Genome* flow_seed = nullptr,
                         const Genome* pressure_seed = nullptr);

// Objective of the run's final vector on the holdout sensors.
double validate_run(const CalibrationRun& run, const NetworkModel& model,
                    const ParameterSpace& space, const MeasurementSet& measurements,
                    const SensorSet& sensors, const Objective& objective);

} // namespace aquacal
