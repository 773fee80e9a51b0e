#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aquacal/calibration.hpp"
#include "aquacal/features.hpp"
#include "aquacal/neat.hpp"
#include "aquacal/params.hpp"

namespace aquacal {

constexpr int kArchiveVersion = 1;

// Everything a later calibration needs to pick up where this one stopped:
// the best genome per phase, the feature layout they were trained against,
// the parameter kinds they decode, fitness history, and provenance.
struct RunArchive {
    int format_version = kArchiveVersion;
    std::string created_at;
    std::string model_fingerprint;
    std::string rules_fingerprint;
    Objective objective;

    FeatureSchema schema;
    std::vector<ParameterKind> flow_kinds;
    std::vector<ParameterKind> pressure_kinds;

    std::optional<Genome> flow_genome;
    std::optional<Genome> pressure_genome;

    struct HistoryRow {
        Phase phase = Phase::flow;
        int generation = 0;
        double best = 0.0;
        double mean = 0.0;
    };
    std::vector<HistoryRow> history;

    NeatConfig neat;
    int loop_outer_iterations = 5;
    double loop_improvement_tol = 0.01;
};

// Provenance and configuration that CalibrationRun itself does not carry.
struct ArchiveContext {
    std::string created_at;
    std::string model_fingerprint;
    std::string rules_fingerprint;
    FeatureSchema schema;
    std::vector<ParameterKind> flow_kinds;
    std::vector<ParameterKind> pressure_kinds;
    NeatConfig neat;
    LoopConfig loop;
    Objective objective;
};

// Canonical INP text hash, used to notice network drift between campaigns.
std::string model_fingerprint(const NetworkModel& model);
std::string text_fingerprint(std::string_view text);

RunArchive make_archive(const CalibrationRun& run, const ArchiveContext& context);

// Single line-oriented document; weights as hexadecimal floats so
// save -> load -> save is byte-stable.
std::string save_archive(const RunArchive& archive);

// Throws ParseError (with a byte offset) on corrupt documents and
// SchemaError on version mismatch or invariant violations.
RunArchive load_archive(std::string_view document);

// Outcome of a compatibility check between an archive and a new problem.
// Genomes are present iff the feature schema layout (names and order) and
// the per-group parameter-kind lists match; otherwise `mismatches` explains
// every difference and the caller cold-starts. A model fingerprint change
// alone only produces a warning.
struct SeedResult {
    std::optional<Genome> flow;
    std::optional<Genome> pressure;
    std::vector<std::string> mismatches;
    std::vector<std::string> warnings;

    bool compatible() const { return mismatches.empty(); }
};

SeedResult seed_calibration(const RunArchive& archive, const NetworkModel& new_model,
                            const ParameterSpace& new_space);

} // namespace aquacal
