#include "aquacal/hydraulics.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace aquacal {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGradientFloor = 1e-5; // m per (m^3/s); 1e-8 m per L/s
constexpr double kFlowTolerance = 1e-6;
constexpr int kMaxIterations = 200;

double swamee_jain(double reynolds, double rel_roughness) {
    double arg = rel_roughness / 3.7 + 5.74 / std::pow(reynolds, 0.9);
    double lg = std::log10(arg);
    return 0.25 / (lg * lg);
}

// Friction factor with laminar law below Re 2000, Swamee-Jain above 4000,
// and a linear blend across the transition band.
double friction_factor(double reynolds, double rel_roughness) {
    if (reynolds <= 2000.0) return 64.0 / std::max(reynolds, 1e-12);
    double f_turb = swamee_jain(std::max(reynolds, 4000.0), rel_roughness);
    if (reynolds >= 4000.0) return f_turb;
    double f_lam = 64.0 / 2000.0;
    return f_lam + (reynolds - 2000.0) / 2000.0 * (f_turb - f_lam);
}

// Head loss and gradient dH/dQ for one link, SI units (m^3/s, m).
struct LossTerms {
    double h = 0.0;
    double gradient = kGradientFloor;
};

LossTerms pipe_loss_si(double q, double length, double diameter, double roughness_mm,
                       double minor_k, HeadlossFormula formula) {
    LossTerms out;
    double aq = std::abs(q);
    double minor_coeff = minor_k * 8.0 / (kPi * kPi * kGravity * std::pow(diameter, 4));
    double h_minor = minor_coeff * aq * aq;

    double h_fric = 0.0;
    double g_fric = 0.0;
    if (formula == HeadlossFormula::darcy_weisbach) {
        double reynolds = 4.0 * aq / (kPi * diameter * kViscosity);
        if (reynolds <= 2000.0) {
            double c = 128.0 * kViscosity * length / (kPi * kGravity * std::pow(diameter, 4));
            h_fric = c * aq;
            g_fric = c;
        } else {
            double f = friction_factor(reynolds, roughness_mm * 1e-3 / diameter);
            double c = f * 8.0 * length / (kPi * kPi * kGravity * std::pow(diameter, 5));
            h_fric = c * aq * aq;
            g_fric = 2.0 * h_fric / aq;
        }
    } else {
        // Hazen-Williams, SI: h = 10.667 L Q^1.852 / (C^1.852 D^4.871)
        double c = 10.667 * length /
                   (std::pow(roughness_mm, 1.852) * std::pow(diameter, 4.871));
        h_fric = c * std::pow(aq, 1.852);
        g_fric = aq > 0.0 ? 1.852 * h_fric / aq : 0.0;
    }
    double g_minor = aq > 0.0 ? 2.0 * h_minor / aq : 0.0;
    out.h = (h_fric + h_minor) * (q < 0.0 ? -1.0 : 1.0);
    out.gradient = std::max(g_fric + g_minor, kGradientFloor);
    return out;
}

LossTerms valve_loss_si(double q, double diameter, double k) {
    LossTerms out;
    double aq = std::abs(q);
    double coeff = k * 8.0 / (kPi * kPi * kGravity * std::pow(diameter, 4));
    double h = coeff * aq * aq;
    out.h = h * (q < 0.0 ? -1.0 : 1.0);
    out.gradient = std::max(aq > 0.0 ? 2.0 * h / aq : 0.0, kGradientFloor);
    return out;
}

struct LinkRec {
    int a = 0;
    int b = 0;
    bool is_pipe = true;
    std::size_t index = 0; // into pipes or valves
    double q = 0.0;        // m^3/s, positive a->b
};

} // namespace

double pipe_headloss(const Pipe& pipe, double flow_lps, const HydraulicOptions& options) {
    if (pipe.diameter_mm <= 0.0 || pipe.length_m <= 0.0)
        throw ModelError("pipe " + pipe.id + " has nonpositive diameter or length");
    return pipe_loss_si(flow_lps * 1e-3, pipe.length_m, pipe.diameter_mm * 1e-3,
                        pipe.roughness, pipe.minor_loss_k, options.headloss)
        .h;
}

double valve_headloss(const Valve& valve, double flow_lps) {
    if (valve.diameter_mm <= 0.0)
        throw ModelError("valve " + valve.id + " has nonpositive diameter");
    return valve_loss_si(flow_lps * 1e-3, valve.diameter_mm * 1e-3, valve.loss_coeff_k).h;
}

double emitter_flow(double pressure_m, double coeff, double exponent) {
    if (pressure_m <= 0.0 || coeff <= 0.0) return 0.0;
    return coeff * std::pow(pressure_m, exponent);
}

HydraulicState solve_steady(const NetworkModel& model,
                            const std::map<std::string, double>& demand_multipliers,
                            const std::map<std::string, double>& head_multipliers) {
    const int nj = int(model.junctions.size());
    const int nr = int(model.reservoirs.size());
    std::unordered_map<std::string, int> node_index;
    for (int i = 0; i < nj; ++i) node_index[model.junctions[i].id] = i;
    for (int i = 0; i < nr; ++i) node_index[model.reservoirs[i].id] = nj + i;

    std::vector<double> fixed_head(nr);
    for (int i = 0; i < nr; ++i) {
        double mult = 1.0;
        if (auto it = head_multipliers.find(model.reservoirs[i].id); it != head_multipliers.end())
            mult = it->second;
        fixed_head[i] = model.reservoirs[i].head_m * mult;
    }

    std::vector<double> demand(nj); // m^3/s
    for (int i = 0; i < nj; ++i) {
        double mult = 1.0;
        if (auto it = demand_multipliers.find(model.junctions[i].id);
            it != demand_multipliers.end())
            mult = it->second;
        demand[i] = model.junctions[i].base_demand_lps * mult * 1e-3;
    }

    std::vector<LinkRec> links;
    for (std::size_t i = 0; i < model.pipes.size(); ++i) {
        const Pipe& p = model.pipes[i];
        if (p.status == LinkStatus::closed) continue;
        double area = kPi / 4.0 * std::pow(p.diameter_mm * 1e-3, 2);
        links.push_back({node_index.at(p.from), node_index.at(p.to), true, i, 0.3 * area});
    }
    for (std::size_t i = 0; i < model.valves.size(); ++i) {
        const Valve& v = model.valves[i];
        if (v.status == LinkStatus::closed) continue;
        double area = kPi / 4.0 * std::pow(v.diameter_mm * 1e-3, 2);
        links.push_back({node_index.at(v.from), node_index.at(v.to), false, i, 0.3 * area});
    }

    // Every junction must reach a fixed-head node through the active links.
    {
        std::vector<std::vector<int>> adj(nj + nr);
        for (const auto& l : links) {
            adj[l.a].push_back(l.b);
            adj[l.b].push_back(l.a);
        }
        std::vector<char> seen(nj + nr, 0);
        std::queue<int> frontier;
        for (int i = 0; i < nr; ++i) {
            seen[nj + i] = 1;
            frontier.push(nj + i);
        }
        while (!frontier.empty()) {
            int u = frontier.front();
            frontier.pop();
            for (int v : adj[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    frontier.push(v);
                }
        }
        for (int i = 0; i < nj; ++i)
            if (!seen[i])
                throw ModelError("junction " + model.junctions[i].id +
                                 " has no path to any reservoir through open links");
    }

    double h0 = nr > 0 ? *std::max_element(fixed_head.begin(), fixed_head.end()) : 0.0;
    Eigen::VectorXd heads = Eigen::VectorXd::Constant(std::max(nj, 1), h0);

    const double gamma = model.options.emitter_exponent;
    auto node_head = [&](int n) { return n < nj ? heads[n] : fixed_head[n - nj]; };

    Eigen::SparseMatrix<double> A(nj, nj);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    std::vector<Eigen::Triplet<double>> triplets;
    bool analyzed = false;

    auto loss_at = [&](const LinkRec& l) {
        if (l.is_pipe) {
            const Pipe& p = model.pipes[l.index];
            return pipe_loss_si(l.q, p.length_m, p.diameter_mm * 1e-3, p.roughness,
                                p.minor_loss_k, model.options.headloss);
        }
        const Valve& v = model.valves[l.index];
        return valve_loss_si(l.q, v.diameter_mm * 1e-3, v.loss_coeff_k);
    };

    auto emitter_si = [&](int i, double head) { // m^3/s
        double pressure = head - model.junctions[i].elevation_m;
        return emitter_flow(pressure, model.junctions[i].emitter_coeff, gamma) * 1e-3;
    };

    // Residuals evaluated from scratch at the current flows and heads.
    auto measure_residuals = [&]() {
        ResidualReport rep;
        std::vector<double> net(nj, 0.0);
        for (const auto& l : links) {
            if (l.a < nj) net[l.a] -= l.q;
            if (l.b < nj) net[l.b] += l.q;
        }
        double sum = 0.0;
        for (int i = 0; i < nj; ++i) {
            double r = std::abs(net[i] - demand[i] - emitter_si(i, heads[i])) * 1e3;
            rep.max_mass_residual_lps = std::max(rep.max_mass_residual_lps, r);
            sum += r;
        }
        rep.mean_mass_residual_lps = nj > 0 ? sum / nj : 0.0;
        for (const auto& l : links) {
            double dh = node_head(l.a) - node_head(l.b);
            rep.max_energy_residual_m =
                std::max(rep.max_energy_residual_m, std::abs(dh - loss_at(l).h));
        }
        return rep;
    };

    // Per-junction mass criterion is demand-scaled, so it cannot be read off
    // the aggregate report.
    auto residuals_ok = [&]() {
        std::vector<double> net(nj, 0.0);
        for (const auto& l : links) {
            if (l.a < nj) net[l.a] -= l.q;
            if (l.b < nj) net[l.b] += l.q;
        }
        for (int i = 0; i < nj; ++i) {
            double r = std::abs(net[i] - demand[i] - emitter_si(i, heads[i])) * 1e3;
            if (r >= 1e-6 * std::max(1.0, std::abs(demand[i] * 1e3))) return false;
        }
        for (const auto& l : links) {
            double dh = node_head(l.a) - node_head(l.b);
            if (std::abs(dh - loss_at(l).h) >= 1e-6) return false;
        }
        return true;
    };

    int iter = 0;
    bool converged = false;
    for (iter = 1; iter <= kMaxIterations; ++iter) {
        triplets.clear();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nj);
        for (int i = 0; i < nj; ++i) rhs[i] = -demand[i];

        std::vector<double> p_inv(links.size()), y(links.size());
        for (std::size_t k = 0; k < links.size(); ++k) {
            const LinkRec& l = links[k];
            LossTerms lt = loss_at(l);
            double p = 1.0 / lt.gradient;
            p_inv[k] = p;
            y[k] = l.q - lt.h * p;
            if (l.a < nj) {
                triplets.emplace_back(l.a, l.a, p);
                rhs[l.a] -= y[k];
            } else if (l.b < nj) {
                rhs[l.b] += p * fixed_head[l.a - nj];
            }
            if (l.b < nj) {
                triplets.emplace_back(l.b, l.b, p);
                rhs[l.b] += y[k];
            } else if (l.a < nj) {
                rhs[l.a] += p * fixed_head[l.b - nj];
            }
            if (l.a < nj && l.b < nj) {
                triplets.emplace_back(l.a, l.b, -p);
                triplets.emplace_back(l.b, l.a, -p);
            }
        }
        for (int i = 0; i < nj; ++i) {
            double head = heads[i];
            double z = model.junctions[i].elevation_m;
            double coeff = model.junctions[i].emitter_coeff * 1e-3; // m^3/s per m^gamma
            if (coeff > 0.0 && head > z) {
                double pr = head - z;
                double e0 = coeff * std::pow(pr, gamma);
                double de = coeff * gamma * std::pow(std::max(pr, 1e-6), gamma - 1.0);
                triplets.emplace_back(i, i, de);
                rhs[i] += -e0 + de * head;
            }
        }

        if (nj > 0) {
            A.setFromTriplets(triplets.begin(), triplets.end());
            if (!analyzed) {
                ldlt.analyzePattern(A);
                analyzed = true;
            }
            ldlt.factorize(A);
            if (ldlt.info() != Eigen::Success)
                throw ModelError("hydraulic matrix factorization failed");
            heads = ldlt.solve(rhs);
        }

        double dq_sum = 0.0, q_sum = 0.0;
        for (std::size_t k = 0; k < links.size(); ++k) {
            LinkRec& l = links[k];
            double qn = p_inv[k] * (node_head(l.a) - node_head(l.b)) + y[k];
            dq_sum += std::abs(qn - l.q);
            q_sum += std::abs(qn);
            l.q = qn;
        }
        if (dq_sum / std::max(q_sum, 1e-9) < kFlowTolerance && residuals_ok()) {
            converged = true;
            break;
        }
    }
    iter = std::min(iter, kMaxIterations);

    HydraulicState state;
    state.iterations = iter;
    state.converged = converged;
    state.residuals = measure_residuals();
    for (int i = 0; i < nj; ++i) {
        const Junction& j = model.junctions[i];
        state.node_heads[j.id] = heads[i];
        state.node_pressures[j.id] = heads[i] - j.elevation_m;
        state.emitter_flows[j.id] = emitter_si(i, heads[i]) * 1e3;
    }
    for (int i = 0; i < nr; ++i) state.node_heads[model.reservoirs[i].id] = fixed_head[i];
    for (const auto& p : model.pipes) state.link_flows[p.id] = 0.0;
    for (const auto& v : model.valves) state.link_flows[v.id] = 0.0;
    for (const auto& l : links) {
        const std::string& id = l.is_pipe ? model.pipes[l.index].id : model.valves[l.index].id;
        state.link_flows[id] = l.q * 1e3;
    }
    return state;
}

SimulationResult simulate_eps(const NetworkModel& model, double duration_s, double step_s) {
    if (step_s <= 0.0 || duration_s < step_s)
        throw ModelError("simulation requires duration >= step > 0");
    long long n = llround(duration_s / step_s);
    if (std::abs(n * step_s - duration_s) > 1e-6 * step_s)
        throw ModelError("duration must be a whole number of hydraulic steps");

    SimulationResult out;
    out.timestamps.reserve(std::size_t(n));
    out.states.reserve(std::size_t(n));
    double pattern_step = model.options.pattern_step_s;

    for (long long k = 0; k < n; ++k) {
        double t = double(k) * step_s;
        std::map<std::string, double> demand_mults, head_mults;
        for (const auto& j : model.junctions) {
            if (j.pattern_id.empty()) continue;
            const auto& mults = model.patterns.at(j.pattern_id);
            auto idx = std::size_t(std::floor(t / pattern_step + 1e-9)) % mults.size();
            demand_mults[j.id] = mults[idx];
        }
        for (const auto& r : model.reservoirs) {
            if (r.head_pattern.empty()) continue;
            const auto& mults = model.patterns.at(r.head_pattern);
            auto idx = std::size_t(std::floor(t / pattern_step + 1e-9)) % mults.size();
            head_mults[r.id] = mults[idx];
        }
        HydraulicState state;
        try {
            state = solve_steady(model, demand_mults, head_mults);
        } catch (const ModelError& e) {
            throw SolveFailure(std::string(e.what()) + " (t=" + format_double(t) + " s)", {},
                               t);
        }
        if (!state.converged) {
            std::ostringstream os;
            os << "no convergence at t=" << format_double(t) << " s after "
               << state.iterations << " iterations (max mass residual "
               << format_double(state.residuals.max_mass_residual_lps)
               << " L/s, max energy residual "
               << format_double(state.residuals.max_energy_residual_m) << " m)";
            throw SolveFailure(os.str(), state.residuals, t);
        }
        out.timestamps.push_back(t);
        out.states.push_back(std::move(state));
    }
    return out;
}

SimulationResult simulate_eps(const NetworkModel& model) {
    return simulate_eps(model, model.options.duration_s, model.options.hydraulic_step_s);
}

ObservationSet extract_observations(const SimulationResult& result, const SensorSet& sensors,
                                    bool include_holdout) {
    ObservationSet out;
    out.timestamps = result.timestamps;
    auto add_flow = [&](const std::string& id) {
        auto& series = out.flow[id];
        for (const auto& s : result.states) {
            auto it = s.link_flows.find(id);
            if (it == s.link_flows.end())
                throw ModelError("unknown flow sensor '" + id + "'");
            series.push_back(it->second);
        }
    };
    auto add_pressure = [&](const std::string& id) {
        auto& series = out.pressure[id];
        for (const auto& s : result.states) {
            auto it = s.node_pressures.find(id);
            if (it == s.node_pressures.end())
                throw ModelError("unknown pressure sensor '" + id + "'");
            series.push_back(it->second);
        }
    };
    for (const auto& id : sensors.flow_sensors) add_flow(id);
    for (const auto& id : sensors.pressure_sensors) add_pressure(id);
    if (include_holdout) {
        for (const auto& id : sensors.holdout_flow) add_flow(id);
        for (const auto& id : sensors.holdout_pressure) add_pressure(id);
    }
    return out;
}

std::string simulation_to_csv(const SimulationResult& result) {
    std::ostringstream os;
    os << "time_s,element_kind,element_id,quantity,value\n";
    for (std::size_t k = 0; k < result.timestamps.size(); ++k) {
        const auto& st = result.states[k];
        std::string t = format_double(result.timestamps[k]);
        for (const auto& [id, q] : st.link_flows)
            os << t << ",pipe," << id << ",flow_lps," << format_double(q) << '\n';
        for (const auto& [id, p] : st.node_pressures)
            os << t << ",junction," << id << ",pressure_m," << format_double(p) << '\n';
        for (const auto& [id, h] : st.node_heads)
            os << t << ",node," << id << ",head_m," << format_double(h) << '\n';
    }
    return os.str();
}

} // namespace aquacal
