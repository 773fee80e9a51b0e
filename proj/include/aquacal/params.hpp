#pragma once

#include <string>
#include <vector>

#include "aquacal/model.hpp"
#include "aquacal/rng.hpp"

namespace aquacal {

enum class ElementKind { junction, pipe, valve };

// `diameter` is reserved in the rule grammar but rejected at compile time;
// it never appears in a ParameterSpace.
enum class ParameterKind { roughness, minor_loss, base_demand, leak_coeff, valve_loss, diameter };

enum class PriorKind { uniform, triangular };
enum class Group { flow, pressure };

const char* to_string(ElementKind k);
const char* to_string(ParameterKind k);
const char* to_string(Group g);
ParameterKind parameter_kind_from_string(const std::string& s);
Group group_from_string(const std::string& s);

struct Prior {
    PriorKind kind = PriorKind::uniform;
    double mode = 0.0; // triangular only
};

struct ParameterSpec {
    ElementKind element_kind;
    std::string element_id;
    ParameterKind parameter;
    double lo = 0.0;
    double hi = 0.0;
    Prior prior;
    Group group = Group::pressure;
    std::vector<std::string> source_rule_ids;

    std::string label() const; // "pipe P1 roughness"
};

// Ordered calibratable parameters. Ordering is (kind, id, parameter name)
// with kinds in junction < pipe < valve order, so two compilations of the
// same inputs are identical.
struct ParameterSpace {
    std::vector<ParameterSpec> specs;
    std::vector<std::size_t> flow_indices;
    std::vector<std::size_t> pressure_indices;

    std::size_t size() const { return specs.size(); }
    bool empty() const { return specs.empty(); }
    void rebuild_group_indices();
};

struct ParameterVector {
    std::vector<double> values;
};

// Partition view per the group tags (explicit `group` beats the default
// flow = {base_demand, leak_coeff} / pressure = {roughness, minor_loss, valve_loss}).
std::pair<std::vector<ParameterSpec>, std::vector<ParameterSpec>>
group_parameters(const ParameterSpace& space);

Group default_group(ParameterKind k);
bool parameter_applies_to(ParameterKind param, ElementKind kind);

// Copy-on-overlay: returns a new model with each spec's target attribute set
// to the matching value; the input model is never touched.
NetworkModel apply_parameters(const NetworkModel& model, const ParameterSpace& space,
                              const ParameterVector& vec);

// Reads the model's current value of each spec's target attribute.
double model_value(const NetworkModel& model, const ParameterSpec& spec);

double sample_prior(const ParameterSpec& spec, Rng& rng);
double prior_midpoint(const ParameterSpec& spec);

} // namespace aquacal
