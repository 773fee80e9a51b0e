#include "aquacal/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace aquacal {

namespace {

template <class T>
const T* find_by_id(const std::vector<T>& xs, const std::string& id) {
    for (const auto& x : xs)
        if (x.id == id) return &x;
    return nullptr;
}

} // namespace

const Junction* NetworkModel::find_junction(const std::string& id) const {
    return find_by_id(junctions, id);
}
const Reservoir* NetworkModel::find_reservoir(const std::string& id) const {
    return find_by_id(reservoirs, id);
}
const Pipe* NetworkModel::find_pipe(const std::string& id) const {
    return find_by_id(pipes, id);
}
const Valve* NetworkModel::find_valve(const std::string& id) const {
    return find_by_id(valves, id);
}
Junction* NetworkModel::find_junction(const std::string& id) {
    return const_cast<Junction*>(find_by_id(junctions, id));
}
Pipe* NetworkModel::find_pipe(const std::string& id) {
    return const_cast<Pipe*>(find_by_id(pipes, id));
}
Valve* NetworkModel::find_valve(const std::string& id) {
    return const_cast<Valve*>(find_by_id(valves, id));
}
bool NetworkModel::has_node(const std::string& id) const {
    return find_junction(id) != nullptr || find_reservoir(id) != nullptr;
}

std::vector<Diagnostic> validate(const NetworkModel& model) {
    std::vector<Diagnostic> out;
    auto err = [&](const std::string& el, std::string msg) {
        out.push_back({Severity::error, el, std::move(msg)});
    };

    // id uniqueness within each kind
    auto check_unique = [&](const char* kind, auto&& ids) {
        std::unordered_set<std::string> seen;
        for (const auto& id : ids)
            if (!seen.insert(id).second)
                err(id, std::string("duplicate ") + kind + " id");
    };
    {
        std::vector<std::string> jids, rids, pids, vids;
        for (const auto& j : model.junctions) jids.push_back(j.id);
        for (const auto& r : model.reservoirs) rids.push_back(r.id);
        for (const auto& p : model.pipes) pids.push_back(p.id);
        for (const auto& v : model.valves) vids.push_back(v.id);
        check_unique("junction", jids);
        check_unique("reservoir", rids);
        check_unique("pipe", pids);
        check_unique("valve", vids);
    }

    if (model.reservoirs.empty())
        err("-", "network has no reservoir (at least one fixed-head node required)");

    std::unordered_set<std::string> node_ids;
    for (const auto& j : model.junctions) node_ids.insert(j.id);
    for (const auto& r : model.reservoirs) node_ids.insert(r.id);

    auto check_pattern = [&](const std::string& owner, const std::string& pat) {
        if (!pat.empty() && !model.patterns.count(pat))
            err(owner, "references unknown pattern '" + pat + "'");
    };

    for (const auto& j : model.junctions) {
        if (j.base_demand_lps < 0.0)
            err(j.id, "base demand is negative");
        if (j.emitter_coeff < 0.0)
            err(j.id, "emitter coefficient is negative");
        if (!std::isfinite(j.elevation_m))
            err(j.id, "elevation is not finite");
        check_pattern(j.id, j.pattern_id);
    }
    for (const auto& r : model.reservoirs) {
        if (!std::isfinite(r.head_m))
            err(r.id, "head is not finite");
        check_pattern(r.id, r.head_pattern);
    }
    for (const auto& p : model.pipes) {
        if (!(p.length_m > 0.0)) err(p.id, "length must be positive");
        if (!(p.diameter_mm > 0.0)) err(p.id, "diameter must be positive");
        if (!(p.roughness > 0.0)) err(p.id, "roughness must be positive");
        if (p.minor_loss_k < 0.0) err(p.id, "minor loss coefficient is negative");
        if (!node_ids.count(p.from)) err(p.id, "endpoint '" + p.from + "' does not exist");
        if (!node_ids.count(p.to)) err(p.id, "endpoint '" + p.to + "' does not exist");
    }
    for (const auto& v : model.valves) {
        if (v.loss_coeff_k < 0.0) err(v.id, "valve loss coefficient is negative");
        if (!(v.diameter_mm > 0.0)) err(v.id, "diameter must be positive");
        if (!node_ids.count(v.from)) err(v.id, "endpoint '" + v.from + "' does not exist");
        if (!node_ids.count(v.to)) err(v.id, "endpoint '" + v.to + "' does not exist");
    }
    for (const auto& [pid, mults] : model.patterns) {
        if (mults.empty())
            err(pid, "pattern has no multipliers");
        for (double m : mults)
            if (m < 0.0 || !std::isfinite(m)) {
                err(pid, "pattern multiplier is negative or not finite");
                break;
            }
    }

    // Connectivity: every junction must reach some reservoir through open links.
    if (!out.empty()) return out; // endpoints may be dangling; skip traversal
    std::unordered_map<std::string, std::vector<std::string>> adj;
    auto add_edge = [&](const std::string& a, const std::string& b) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    };
    for (const auto& p : model.pipes)
        if (p.status == LinkStatus::open) add_edge(p.from, p.to);
    for (const auto& v : model.valves)
        if (v.status == LinkStatus::open) add_edge(v.from, v.to);

    std::unordered_set<std::string> reached;
    std::deque<std::string> queue;
    for (const auto& r : model.reservoirs) {
        reached.insert(r.id);
        queue.push_back(r.id);
    }
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        auto it = adj.find(cur);
        if (it == adj.end()) continue;
        for (const auto& nb : it->second)
            if (reached.insert(nb).second) queue.push_back(nb);
    }
    for (const auto& j : model.junctions)
        if (!reached.count(j.id))
            err(j.id, "junction is not connected to any reservoir through open links");

    return out;
}

} // namespace aquacal
