#pragma once

#include <cstdint>
#include <string>

#include "aquacal/calibration.hpp"
#include "aquacal/hydraulics.hpp"
#include "aquacal/model.hpp"

namespace aquacal {

// Generator knobs. The fossolo profile is a fixed-size looped benchmark
// (36 junctions, 58 pipes, one reservoir at 121.00 m, all-PE pipes at
// 0.0015 mm); scaled builds the same style of grid with any junction count.
struct SynthSpec {
    std::string profile = "fossolo"; // "fossolo" | "scaled"
    int junctions = 36;              // scaled profile only
    std::uint64_t seed = 1;
    double noise_sigma = 0.0;            // gaussian noise added to measurements
    double demand_perturbation = 0.35;   // zone demand multiplier half-range
    double roughness_perturbation = 0.5; // global roughness multiplier half-range
    double pressure_floor_m = 40.0;      // <= 0 skips demand scaling
    int flow_sensors = 3;                // calibration flow meters (1 more held out)
    int pressure_sensors = 3;            // calibration gauges (1 more held out)
};

// A complete self-consistent calibration problem: the nominal network, the
// perturbed truth that produced the measurements, per-zone bounds that
// contain the truth, and sensors on the high-flow mains plus gauges spread
// over the pressure range (one of each kind held out for validation).
struct SynthProblem {
    NetworkModel base;
    NetworkModel truth;
    std::string rules_text;
    SensorSet sensors;
    MeasurementSet measurements;
    double demand_scale = 1.0; // factor applied to hold the pressure floor
};

SynthProblem generate_synthetic(const SynthSpec& spec);

} // namespace aquacal
