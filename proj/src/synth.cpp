#include "aquacal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "aquacal/common.hpp"
#include "aquacal/rng.hpp"

namespace aquacal {

namespace {

// Diurnal demand pattern, one multiplier per 2 h.
const std::vector<double> kDiurnal = {0.6, 0.5, 0.5, 0.7, 1.1, 1.3,
                                      1.4, 1.3, 1.2, 1.1, 0.9, 0.7};

struct GridEdge {
    int a = 0; // junction indices
    int b = 0;
};

std::string junction_id(int index) { return "J" + std::to_string(index + 1); }

// Minimum junction pressure over a full extended-period run.
double min_pressure(const NetworkModel& model) {
    auto sim = simulate_eps(model);
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& state : sim.states)
        for (const auto& [id, p] : state.node_pressures) lo = std::min(lo, p);
    return lo;
}

bool connected_without(const std::vector<GridEdge>& edges, int n, int skip) {
    std::vector<std::vector<int>> adj(n);
    for (int e = 0; e < int(edges.size()); ++e) {
        if (e == skip) continue;
        adj[edges[e].a].push_back(edges[e].b);
        adj[edges[e].b].push_back(edges[e].a);
    }
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (int w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                q.push(w);
            }
    }
    return count == n;
}

std::vector<int> bfs_depth(const std::vector<GridEdge>& edges, int n) {
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : edges) {
        adj[e.a].push_back(e.b);
        adj[e.b].push_back(e.a);
    }
    std::vector<int> depth(n, -1);
    std::queue<int> q;
    q.push(0);
    depth[0] = 0;
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (int w : adj[v])
            if (depth[w] < 0) {
                depth[w] = depth[v] + 1;
                q.push(w);
            }
    }
    return depth;
}

} // namespace

SynthProblem generate_synthetic(const SynthSpec& spec) {
    const bool fossolo = spec.profile == "fossolo";
    if (!fossolo && spec.profile != "scaled")
        throw SchemaError("unknown synth profile '" + spec.profile +
                          "' (expected fossolo or scaled)");
    const int n = fossolo ? 36 : spec.junctions;
    if (n < 4) throw SchemaError("scaled profile needs at least 4 junctions");

    const int cols = std::max(2, int(std::ceil(std::sqrt(double(n)))));
    const int rows = (n + cols - 1) / cols;
    auto cell_index = [&](int r, int c) { return r * cols + c; };
    auto exists = [&](int r, int c) {
        return r >= 0 && c >= 0 && c < cols && cell_index(r, c) < n;
    };

    Rng geom(mix_seed(spec.seed, 101));

    // grid edges, row-major, right neighbor before down neighbor
    std::vector<GridEdge> edges;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!exists(r, c)) continue;
            if (exists(r, c + 1)) edges.push_back({cell_index(r, c), cell_index(r, c + 1)});
            if (exists(r + 1, c)) edges.push_back({cell_index(r, c), cell_index(r + 1, c)});
        }

    if (fossolo) {
        // trim a 6x6 grid's 60 internal edges to 57 so the feed makes 58
        // pipes; removals must not disconnect the net or touch the source
        int removed = 0;
        int guard = 0;
        while (removed < 3 && guard++ < 1000) {
            int e = int(geom.next_below(edges.size()));
            if (edges[e].a == 0 || edges[e].b == 0) continue;
            if (!connected_without(edges, n, e)) continue;
            edges.erase(edges.begin() + e);
            ++removed;
        }
        if (removed != 3) throw ModelError("edge trimming failed to keep the grid connected");
    }

    const auto depth = bfs_depth(edges, n);

    NetworkModel base;
    base.title = fossolo ? "synthetic fossolo-like benchmark"
                         : "synthetic scaled benchmark (" + std::to_string(n) + " junctions)";
    base.options.headloss = HeadlossFormula::darcy_weisbach;
    base.options.duration_s = 86400;
    base.options.hydraulic_step_s = 3600;
    base.options.pattern_step_s = 7200;
    base.patterns["diurnal"] = kDiurnal;

    // three demand zones by column band; per-zone base demand so the truth
    // perturbation stays a function of the features the decoder sees
    std::vector<double> zone_demand(3);
    for (auto& d : zone_demand) d = geom.uniform(0.3, 0.9);
    auto zone_of = [&](int c) {
        if (c < cols / 3 + (cols % 3 > 0 ? 1 : 0)) return 0;
        if (c < 2 * cols / 3 + (cols % 3 > 1 ? 1 : 0)) return 1;
        return 2;
    };
    const char* zone_names[3] = {"a", "b", "c"};

    for (int i = 0; i < n; ++i) {
        const int r = i / cols, c = i % cols;
        Junction j;
        j.id = junction_id(i);
        j.elevation_m = 55.0 + 10.0 * double(r + c) / double(std::max(rows + cols - 2, 1)) +
                        geom.uniform(0.0, 2.0);
        j.base_demand_lps = zone_demand[zone_of(c)];
        j.pattern_id = "diurnal";
        j.zone = zone_names[zone_of(c)];
        base.junctions.push_back(j);
        base.coordinates[j.id] = {double(c) * 100.0, double(r) * -100.0};
    }

    Reservoir res;
    res.id = "R1";
    res.head_m = 121.0;
    base.reservoirs.push_back(res);
    base.coordinates["R1"] = {-100.0, 100.0};

    Pipe feed;
    feed.id = "P1";
    feed.from = "R1";
    feed.to = junction_id(0);
    feed.length_m = 100.0;
    feed.diameter_mm = 250.0;
    feed.roughness = 0.0015;
    feed.material = "PE";
    base.pipes.push_back(feed);

    const double diameters[3] = {80.0, 100.0, 125.0};
    for (std::size_t e = 0; e < edges.size(); ++e) {
        Pipe p;
        p.id = "P" + std::to_string(e + 2);
        p.from = junction_id(edges[e].a);
        p.to = junction_id(edges[e].b);
        p.length_m = std::round(geom.uniform(60.0, 140.0) * 10.0) / 10.0;
        const int d = std::min(depth[edges[e].a], depth[edges[e].b]);
        if (d <= 1) p.diameter_mm = 200.0;
        else if (d <= 3) p.diameter_mm = 150.0;
        else p.diameter_mm = diameters[geom.next_below(3)];
        p.roughness = 0.0015;
        p.material = "PE";
        base.pipes.push_back(p);
    }

    {
        auto diags = validate(base);
        if (has_errors(diags))
            throw ModelError("generated network failed validation: " + diags.front().message);
    }

    // scale demands until the worst junction just holds the pressure floor
    double scale = 1.0;
    if (spec.pressure_floor_m > 0.0) {
        auto floor_ok = [&](double s) {
            NetworkModel m = base;
            for (auto& j : m.junctions) j.base_demand_lps *= s;
            try {
                return min_pressure(m) >= spec.pressure_floor_m;
            } catch (const SolveFailure&) {
                return false;
            }
        };
        if (!floor_ok(1e-6))
            throw ModelError("infeasible pressure-floor scaling: static pressure is below " +
                             format_double(spec.pressure_floor_m) + " m");
        double lo = 1e-6, hi = 64.0;
        if (floor_ok(hi)) {
            lo = hi;
        } else {
            for (int it = 0; it < 40; ++it) {
                double mid = 0.5 * (lo + hi);
                (floor_ok(mid) ? lo : hi) = mid;
            }
        }
        scale = lo;
        for (auto& j : base.junctions) j.base_demand_lps *= scale;
    }

    // the truth the measurements come from: per-zone demand multipliers and
    // one network-wide roughness multiplier, all inside the emitted bounds
    Rng truth_rng(mix_seed(spec.seed, 202));
    NetworkModel truth = base;
    double zone_mult[3];
    for (auto& m : zone_mult)
        m = truth_rng.uniform(1.0 - spec.demand_perturbation, 1.0 + spec.demand_perturbation);
    const double rough_mult = truth_rng.uniform(1.0 - spec.roughness_perturbation,
                                                1.0 + spec.roughness_perturbation);
    const double rough_lo = 0.0005, rough_hi = 0.004;
    for (int i = 0; i < n; ++i)
        truth.junctions[i].base_demand_lps *= zone_mult[zone_of(i % cols)];
    for (auto& p : truth.pipes)
        p.roughness = std::clamp(p.roughness * rough_mult, rough_lo, rough_hi);

    // bounds per demand zone, as a metering district's billing records would
    // give them; each zone interval covers both the nominal and true demand
    double zone_lo[3], zone_hi[3];
    int zone_count[3] = {0, 0, 0};
    for (int z = 0; z < 3; ++z) {
        zone_lo[z] = std::numeric_limits<double>::infinity();
        zone_hi[z] = 0.0;
    }
    for (int i = 0; i < n; ++i) {
        const int z = zone_of(i % cols);
        zone_lo[z] = std::min({zone_lo[z], base.junctions[i].base_demand_lps,
                               truth.junctions[i].base_demand_lps});
        zone_hi[z] = std::max({zone_hi[z], base.junctions[i].base_demand_lps,
                               truth.junctions[i].base_demand_lps});
        ++zone_count[z];
    }

    SynthProblem out;
    out.base = base;
    out.truth = truth;
    out.demand_scale = scale;
    for (int z = 0; z < 3; ++z) {
        if (zone_count[z] == 0) continue;
        out.rules_text += std::string("rule demand_zone_") + zone_names[z] +
                          "\nmatch junction where zone == \"" + zone_names[z] +
                          "\"\nparam base_demand\nbounds " + format_double(0.9 * zone_lo[z]) +
                          " " + format_double(1.1 * zone_hi[z]) + "\nend\n\n";
    }
    out.rules_text += "rule roughness_all\nmatch pipe\nparam roughness\nbounds " +
                      format_double(rough_lo) + " " + format_double(rough_hi) + "\nend\n";

    // sensors: flow meters on the highest-flow mains (next one held out),
    // pressure gauges spread across the pressure range
    auto base_sim = simulate_eps(base);
    std::vector<std::pair<double, std::string>> flow_rank;
    for (const auto& p : base.pipes) {
        double mean = 0.0;
        for (const auto& st : base_sim.states) mean += std::abs(st.link_flows.at(p.id));
        flow_rank.push_back({mean / double(base_sim.states.size()), p.id});
    }
    std::sort(flow_rank.begin(), flow_rank.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const int fs = std::clamp(spec.flow_sensors, 1, int(flow_rank.size()) - 1);
    for (int k = 0; k < fs; ++k) out.sensors.flow_sensors.push_back(flow_rank[k].second);
    out.sensors.holdout_flow.push_back(flow_rank[fs].second);

    std::vector<std::pair<double, std::string>> pressure_rank;
    for (const auto& j : base.junctions) {
        double mean = 0.0;
        for (const auto& st : base_sim.states) mean += st.node_pressures.at(j.id);
        pressure_rank.push_back({mean / double(base_sim.states.size()), j.id});
    }
    std::sort(pressure_rank.begin(), pressure_rank.end());
    const std::size_t count = pressure_rank.size();
    const std::size_t ps = std::size_t(std::clamp(spec.pressure_sensors, 1, int(count) - 1));
    std::vector<std::size_t> picks;
    for (std::size_t k = 0; k < ps; ++k) {
        std::size_t idx = ((2 * k + 1) * count) / (2 * ps);
        while (std::find(picks.begin(), picks.end(), idx) != picks.end()) ++idx;
        picks.push_back(idx);
    }
    for (std::size_t idx : picks)
        out.sensors.pressure_sensors.push_back(pressure_rank[idx].second);
    std::size_t hold = count / 3;
    while (std::find(picks.begin(), picks.end(), hold) != picks.end()) ++hold;
    out.sensors.holdout_pressure.push_back(pressure_rank[hold].second);

    auto truth_sim = simulate_eps(truth);
    auto obs = extract_observations(truth_sim, out.sensors, true);
    out.measurements = observations_to_measurements(obs);
    if (spec.noise_sigma > 0.0) {
        Rng noise(mix_seed(spec.seed, 303));
        for (auto& [id, series] : out.measurements.flow)
            for (auto& v : series.values) v += noise.gaussian(0.0, spec.noise_sigma);
        for (auto& [id, series] : out.measurements.pressure)
            for (auto& v : series.values) v += noise.gaussian(0.0, spec.noise_sigma);
    }
    return out;
}

} // namespace aquacal
