#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aquacal/calibration.hpp"

namespace aquacal {

enum class Method { monte_carlo, latin_hypercube, simulated_annealing, pso, sceua, ga };

const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct OptimizerSpec {
    Method method = Method::monte_carlo;
    std::size_t budget = 1000;
    std::uint64_t seed = 0;

    // simulated annealing: gaussian proposals with per-dimension sigma
    // 0.1 * range * max(T/T0, 0.01), geometric cooling per evaluation
    double sa_initial_temp = 1.0;
    double sa_cooling = 0.995;

    // particle swarm: global-best update with reflection at the bounds
    int pso_swarm = 20;
    double pso_inertia = 0.729;
    double pso_cognitive = 1.49445;
    double pso_social = 1.49445;

    // shuffled complex evolution: complexes of 2n+1 points unless overridden
    int sceua_complexes = 2;
    int sceua_complex_size = 0; // 0 = 2 * dimension + 1

    // real-coded GA: tournament selection, blend crossover, gaussian mutation
    int ga_population = 20;
    int ga_tournament = 3;
    double ga_crossover_rate = 0.9;
    double ga_blend_alpha = 0.5;
    double ga_mutation_rate = 0.1;  // per gene
    double ga_mutation_sigma = 0.1; // fraction of range
};

struct Bounds {
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t size() const { return lo.size(); }
};

struct EvaluationTrace {
    std::vector<std::vector<double>> candidates; // in evaluation order
    std::vector<double> values;
    std::vector<double> best_so_far; // non-increasing, same length
    std::vector<double> best_x;
    bool aborted = false;       // objective raised a structural error
    std::string abort_reason;

    double final_best() const { return best_so_far.empty() ? 0.0 : best_so_far.back(); }
    std::size_t evaluations() const { return values.size(); }
};

using BoxObjective = std::function<double(const std::vector<double>&)>;

// Runs the configured method for exactly `budget` objective calls (fewer only
// if the objective throws, which yields a partial trace with aborted set).
// Every proposed candidate lies within the bounds; identical spec -> identical
// trace.
EvaluationTrace optimize(const OptimizerSpec& spec, const Bounds& bounds,
                         const BoxObjective& objective);

struct CompareEntry {
    std::string method; // method name, "es_neat", or "pre_calibration"
    double final_best = 0.0;
    std::size_t evaluations = 0;
    std::vector<double> curve; // best-so-far per evaluation
    bool accepted = false;     // final_best < acceptance threshold
};

struct ComparisonTable {
    std::vector<CompareEntry> entries; // sorted ascending by final_best
    double acceptance_threshold = 3.0;
};

// Shared-budget comparison on one calibration problem. Baselines optimize the
// raw parameter vector directly; the es_neat entry evolves one genome that
// decodes the full space. All methods score the same objective over both
// calibration sensor kinds; a pre_calibration row records the starting
// model's objective with zero evaluations.
ComparisonTable compare(const NetworkModel& model, const ParameterSpace& space,
                        const MeasurementSet& measurements, const SensorSet& sensors,
                        const std::vector<Method>& methods, bool include_es_neat,
                        std::size_t budget, std::uint64_t seed, const NeatConfig& neat_config,
                        const Objective& objective = {},
                        double acceptance_threshold = 3.0);

// `method,final_best,evaluations,accepted` rows in table order.
std::string comparison_to_csv(const ComparisonTable& table);
// `evaluation,best_so_far` rows.
std::string curve_to_csv(const std::vector<double>& curve);

} // namespace aquacal
