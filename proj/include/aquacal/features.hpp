#pragma once

#include <map>
#include <string>
#include <vector>

#include "aquacal/model.hpp"
#include "aquacal/params.hpp"

namespace aquacal {

// One input feature: its name and the raw min/max it was normalized with.
// One-hot and constant features keep lo=0, hi=1.
struct FeatureDef {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
};

// Ordered feature layout per element kind.
//
//   pipe:     const_1, length_norm, diameter_norm, degree_from_norm,
//             degree_to_norm, mid_elevation_norm, material=<m>...
//   junction: const_1, elevation_norm, degree_norm, base_demand_norm,
//             zone=<z>...
//   valve:    const_1, diameter_norm, degree_from_norm, degree_to_norm,
//             mid_elevation_norm, kind=<k>...
//
// Numeric features are min-max normalized over the elements of that kind,
// except the degree features, which all share the node-degree range taken
// over every node in the network. A feature whose raw values are all equal
// maps to 0.5 everywhere. One-hot categories are the sorted distinct
// non-empty labels present in the model; an unlabeled element gets all
// zeros. Every emitted value lies in [0, 1].
struct FeatureSchema {
    std::vector<FeatureDef> pipe;
    std::vector<FeatureDef> junction;
    std::vector<FeatureDef> valve;

    const std::vector<FeatureDef>& for_kind(ElementKind kind) const;
    // Canonical text form; hashed for archive compatibility checks.
    std::string serialize() const;
};

struct FeatureSet {
    FeatureSchema schema;
    std::map<std::string, std::vector<double>> pipe_vectors;
    std::map<std::string, std::vector<double>> junction_vectors;
    std::map<std::string, std::vector<double>> valve_vectors;

    const std::vector<double>& vector_for(ElementKind kind, const std::string& id) const;
};

FeatureSet build_features(const NetworkModel& model);

// Inverse of FeatureSchema::serialize. Throws SchemaError on malformed lines.
FeatureSchema parse_feature_schema(std::string_view text);

} // namespace aquacal
