#include "aquacal/params.hpp"

#include <algorithm>

#include "aquacal/common.hpp"

namespace aquacal {

const char* to_string(ElementKind k) {
    switch (k) {
        case ElementKind::junction: return "junction";
        case ElementKind::pipe: return "pipe";
        case ElementKind::valve: return "valve";
    }
    return "?";
}

const char* to_string(ParameterKind k) {
    switch (k) {
        case ParameterKind::roughness: return "roughness";
        case ParameterKind::minor_loss: return "minor_loss";
        case ParameterKind::base_demand: return "base_demand";
        case ParameterKind::leak_coeff: return "leak_coeff";
        case ParameterKind::valve_loss: return "valve_loss";
        case ParameterKind::diameter: return "diameter";
    }
    return "?";
}

const char* to_string(Group g) {
    return g == Group::flow ? "flow" : "pressure";
}

ParameterKind parameter_kind_from_string(const std::string& s) {
    if (s == "roughness") return ParameterKind::roughness;
    if (s == "minor_loss") return ParameterKind::minor_loss;
    if (s == "base_demand") return ParameterKind::base_demand;
    if (s == "leak_coeff") return ParameterKind::leak_coeff;
    if (s == "valve_loss") return ParameterKind::valve_loss;
    if (s == "diameter") return ParameterKind::diameter;
    throw SchemaError("unknown parameter kind '" + s + "'");
}

Group group_from_string(const std::string& s) {
    if (s == "flow") return Group::flow;
    if (s == "pressure") return Group::pressure;
    throw SchemaError("unknown group '" + s + "'");
}

std::string ParameterSpec::label() const {
    std::string s = to_string(element_kind);
    s += ' ';
    s += element_id;
    s += ' ';
    s += to_string(parameter);
    return s;
}

void ParameterSpace::rebuild_group_indices() {
    flow_indices.clear();
    pressure_indices.clear();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        (specs[i].group == Group::flow ? flow_indices : pressure_indices).push_back(i);
    }
}

std::pair<std::vector<ParameterSpec>, std::vector<ParameterSpec>>
group_parameters(const ParameterSpace& space) {
    std::vector<ParameterSpec> flow, pressure;
    for (const auto& s : space.specs)
        (s.group == Group::flow ? flow : pressure).push_back(s);
    return {std::move(flow), std::move(pressure)};
}

Group default_group(ParameterKind k) {
    switch (k) {
        case ParameterKind::base_demand:
        case ParameterKind::leak_coeff:
            return Group::flow;
        default:
            return Group::pressure;
    }
}

bool parameter_applies_to(ParameterKind param, ElementKind kind) {
    switch (param) {
        case ParameterKind::roughness:
        case ParameterKind::minor_loss:
            return kind == ElementKind::pipe;
        case ParameterKind::base_demand:
        case ParameterKind::leak_coeff:
            return kind == ElementKind::junction;
        case ParameterKind::valve_loss:
            return kind == ElementKind::valve;
        case ParameterKind::diameter:
            return kind == ElementKind::pipe || kind == ElementKind::valve;
    }
    return false;
}

NetworkModel apply_parameters(const NetworkModel& model, const ParameterSpace& space,
                              const ParameterVector& vec) {
    if (vec.values.size() != space.specs.size())
        throw BoundsError("parameter vector length " + std::to_string(vec.values.size()) +
                          " does not match parameter space size " +
                          std::to_string(space.specs.size()));

    NetworkModel out = model;
    for (std::size_t i = 0; i < space.specs.size(); ++i) {
        const ParameterSpec& spec = space.specs[i];
        const double v = vec.values[i];
        if (v < spec.lo || v > spec.hi)
            throw BoundsError("value " + format_double(v) + " for " + spec.label() +
                              " outside bounds [" + format_double(spec.lo) + ", " +
                              format_double(spec.hi) + "]");

        auto missing = [&]() -> ModelError {
            return ModelError("parameter spec targets missing element: " + spec.label());
        };
        switch (spec.element_kind) {
            case ElementKind::pipe: {
                auto it = std::find_if(out.pipes.begin(), out.pipes.end(),
                                       [&](const Pipe& p) { return p.id == spec.element_id; });
                if (it == out.pipes.end()) throw missing();
                if (spec.parameter == ParameterKind::roughness)
                    it->roughness = v;
                else if (spec.parameter == ParameterKind::minor_loss)
                    it->minor_loss_k = v;
                else
                    throw missing();
                break;
            }
            case ElementKind::junction: {
                auto it = std::find_if(out.junctions.begin(), out.junctions.end(),
                                       [&](const Junction& j) { return j.id == spec.element_id; });
                if (it == out.junctions.end()) throw missing();
                if (spec.parameter == ParameterKind::base_demand)
                    it->base_demand_lps = v;
                else if (spec.parameter == ParameterKind::leak_coeff)
                    it->emitter_coeff = v;
                else
                    throw missing();
                break;
            }
            case ElementKind::valve: {
                auto it = std::find_if(out.valves.begin(), out.valves.end(),
                                       [&](const Valve& va) { return va.id == spec.element_id; });
                if (it == out.valves.end()) throw missing();
                if (spec.parameter == ParameterKind::valve_loss)
                    it->loss_coeff_k = v;
                else
                    throw missing();
                break;
            }
        }
    }
    return out;
}

double model_value(const NetworkModel& model, const ParameterSpec& spec) {
    switch (spec.element_kind) {
        case ElementKind::pipe: {
            const Pipe* p = model.find_pipe(spec.element_id);
            if (!p) throw ModelError("parameter spec targets missing element: " + spec.label());
            return spec.parameter == ParameterKind::roughness ? p->roughness : p->minor_loss_k;
        }
        case ElementKind::junction: {
            const Junction* j = model.find_junction(spec.element_id);
            if (!j) throw ModelError("parameter spec targets missing element: " + spec.label());
            return spec.parameter == ParameterKind::base_demand ? j->base_demand_lps
                                                                : j->emitter_coeff;
        }
        case ElementKind::valve: {
            const Valve* v = model.find_valve(spec.element_id);
            if (!v) throw ModelError("parameter spec targets missing element: " + spec.label());
            return v->loss_coeff_k;
        }
    }
    return 0.0;
}

double sample_prior(const ParameterSpec& spec, Rng& rng) {
    if (spec.prior.kind == PriorKind::uniform) {
        if (spec.lo == spec.hi) return spec.lo;
        return rng.uniform(spec.lo, spec.hi);
    }
    if (spec.prior.mode < spec.lo || spec.prior.mode > spec.hi)
        throw BoundsError("triangular mode " + format_double(spec.prior.mode) +
                          " outside bounds of " + spec.label());
    return rng.triangular(spec.lo, spec.prior.mode, spec.hi);
}

double prior_midpoint(const ParameterSpec& spec) {
    if (spec.prior.kind == PriorKind::triangular) return spec.prior.mode;
    return 0.5 * (spec.lo + spec.hi);
}

} // namespace aquacal
