#include "aquacal/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "aquacal/common.hpp"
#include "aquacal/rng.hpp"

namespace aquacal {

namespace {

constexpr double kPenaltyBase = 1e6;

// Thrown internally when the user objective raises; optimize() turns it into
// an aborted partial trace.
struct AbortSignal {};

struct Driver {
    const Bounds& bounds;
    const BoxObjective& objective;
    std::size_t budget;
    EvaluationTrace trace;

    bool exhausted() const { return trace.values.size() >= budget; }

    double eval(const std::vector<double>& x) {
        double v;
        try {
            v = objective(x);
        } catch (const std::exception& e) {
            trace.aborted = true;
            trace.abort_reason = e.what();
            throw AbortSignal{};
        }
        trace.candidates.push_back(x);
        trace.values.push_back(v);
        if (trace.best_so_far.empty() || v < trace.best_so_far.back()) {
            trace.best_so_far.push_back(v);
            trace.best_x = x;
        } else {
            trace.best_so_far.push_back(trace.best_so_far.back());
        }
        return v;
    }
};

std::vector<double> uniform_point(const Bounds& b, Rng& rng) {
    std::vector<double> x(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) x[i] = rng.uniform(b.lo[i], b.hi[i]);
    return x;
}

void run_monte_carlo(Driver& d, Rng& rng) {
    while (!d.exhausted()) d.eval(uniform_point(d.bounds, rng));
}

void run_latin_hypercube(Driver& d, Rng& rng) {
    const std::size_t n = d.budget;
    const std::size_t dims = d.bounds.size();
    // one stratum permutation per dimension
    std::vector<std::vector<std::size_t>> perm(dims);
    for (std::size_t j = 0; j < dims; ++j) {
        perm[j].resize(n);
        for (std::size_t i = 0; i < n; ++i) perm[j][i] = i;
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(perm[j][i], perm[j][rng.next_below(i + 1)]);
    }
    for (std::size_t k = 0; k < n && !d.exhausted(); ++k) {
        std::vector<double> x(dims);
        for (std::size_t j = 0; j < dims; ++j) {
            double u = (double(perm[j][k]) + rng.next_unit()) / double(n);
            x[j] = d.bounds.lo[j] + u * (d.bounds.hi[j] - d.bounds.lo[j]);
        }
        d.eval(x);
    }
}

void run_simulated_annealing(Driver& d, Rng& rng, const OptimizerSpec& spec) {
    const std::size_t dims = d.bounds.size();
    std::vector<double> x = uniform_point(d.bounds, rng);
    double fx = d.eval(x);
    double temp = spec.sa_initial_temp;
    while (!d.exhausted()) {
        std::vector<double> y(dims);
        const double scale = std::max(temp / spec.sa_initial_temp, 0.01);
        for (std::size_t i = 0; i < dims; ++i) {
            double sigma = 0.1 * (d.bounds.hi[i] - d.bounds.lo[i]) * scale;
            y[i] = std::clamp(x[i] + rng.gaussian(0.0, sigma), d.bounds.lo[i], d.bounds.hi[i]);
        }
        double fy = d.eval(y);
        if (fy <= fx || rng.chance(std::exp(-(fy - fx) / std::max(temp, 1e-300)))) {
            x = std::move(y);
            fx = fy;
        }
        temp *= spec.sa_cooling;
    }
}

void run_pso(Driver& d, Rng& rng, const OptimizerSpec& spec) {
    const std::size_t dims = d.bounds.size();
    const std::size_t swarm = std::size_t(spec.pso_swarm);
    std::vector<std::vector<double>> x(swarm), v(swarm), pbest(swarm);
    std::vector<double> pval(swarm, 0.0);
    std::vector<double> gbest;
    double gval = 0.0;
    bool have_g = false;
    for (std::size_t i = 0; i < swarm; ++i) {
        x[i] = uniform_point(d.bounds, rng);
        v[i].assign(dims, 0.0);
    }
    while (!d.exhausted()) {
        for (std::size_t i = 0; i < swarm && !d.exhausted(); ++i) {
            double f = d.eval(x[i]);
            if (pbest[i].empty() || f < pval[i]) {
                pbest[i] = x[i];
                pval[i] = f;
            }
            if (!have_g || f < gval) {
                gbest = x[i];
                gval = f;
                have_g = true;
            }
        }
        if (d.exhausted()) break;
        for (std::size_t i = 0; i < swarm; ++i) {
            for (std::size_t j = 0; j < dims; ++j) {
                double r1 = rng.next_unit(), r2 = rng.next_unit();
                v[i][j] = spec.pso_inertia * v[i][j] +
                          spec.pso_cognitive * r1 * (pbest[i][j] - x[i][j]) +
                          spec.pso_social * r2 * (gbest[j] - x[i][j]);
                double nx = x[i][j] + v[i][j];
                // reflect at the walls; clamp as a last resort for huge steps
                for (int flip = 0; flip < 8; ++flip) {
                    if (nx < d.bounds.lo[j]) {
                        nx = 2.0 * d.bounds.lo[j] - nx;
                        v[i][j] = -v[i][j];
                    } else if (nx > d.bounds.hi[j]) {
                        nx = 2.0 * d.bounds.hi[j] - nx;
                        v[i][j] = -v[i][j];
                    } else {
                        break;
                    }
                }
                x[i][j] = std::clamp(nx, d.bounds.lo[j], d.bounds.hi[j]);
            }
        }
    }
}

void run_sceua(Driver& d, Rng& rng, const OptimizerSpec& spec) {
    const std::size_t dims = d.bounds.size();
    const std::size_t p = std::size_t(spec.sceua_complexes);
    const std::size_t m = spec.sceua_complex_size > 0 ? std::size_t(spec.sceua_complex_size)
                                                      : 2 * dims + 1;
    const std::size_t q = dims + 1; // simplex size
    if (m < q) throw SchemaError("SCE-UA complex size must be at least dimension + 1");

    struct Point {
        std::vector<double> x;
        double f;
    };
    std::vector<Point> pts;
    for (std::size_t i = 0; i < p * m && !d.exhausted(); ++i) {
        auto x = uniform_point(d.bounds, rng);
        pts.push_back({x, d.eval(x)});
    }

    auto complex_box = [&](const std::vector<std::size_t>& members) {
        Bounds box;
        box.lo.assign(dims, 0.0);
        box.hi.assign(dims, 0.0);
        for (std::size_t j = 0; j < dims; ++j) {
            double lo = d.bounds.hi[j], hi = d.bounds.lo[j];
            for (std::size_t idx : members) {
                lo = std::min(lo, pts[idx].x[j]);
                hi = std::max(hi, pts[idx].x[j]);
            }
            box.lo[j] = lo;
            box.hi[j] = hi;
        }
        return box;
    };

    while (!d.exhausted()) {
        std::vector<std::size_t> order(pts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (pts[a].f != pts[b].f) return pts[a].f < pts[b].f;
            return a < b;
        });
        for (std::size_t k = 0; k < p && !d.exhausted(); ++k) {
            // systematic partition: complex k takes ranks k, k+p, k+2p, ...
            std::vector<std::size_t> members;
            for (std::size_t r = k; r < order.size(); r += p) members.push_back(order[r]);
            if (members.size() < q) continue;
            const Bounds box = complex_box(members);
            for (std::size_t step = 0; step < m && !d.exhausted(); ++step) {
                // triangular selection probabilities favor better ranks
                std::vector<std::size_t> simplex;
                while (simplex.size() < q) {
                    const std::size_t mm = members.size();
                    double u = rng.next_unit();
                    // inverse cdf of P(rank i) ~ (mm - i), i = 0..mm-1
                    double total = double(mm) * double(mm + 1) / 2.0;
                    double acc = 0.0;
                    std::size_t pick = mm - 1;
                    for (std::size_t i = 0; i < mm; ++i) {
                        acc += double(mm - i) / total;
                        if (u < acc) {
                            pick = i;
                            break;
                        }
                    }
                    if (std::find(simplex.begin(), simplex.end(), pick) == simplex.end())
                        simplex.push_back(pick);
                }
                std::sort(simplex.begin(), simplex.end(), [&](std::size_t a, std::size_t b) {
                    const std::size_t ia = members[a], ib = members[b];
                    if (pts[ia].f != pts[ib].f) return pts[ia].f < pts[ib].f;
                    return ia < ib;
                });
                const std::size_t worst = members[simplex.back()];
                std::vector<double> centroid(dims, 0.0);
                for (std::size_t s = 0; s + 1 < simplex.size(); ++s)
                    for (std::size_t j = 0; j < dims; ++j)
                        centroid[j] += pts[members[simplex[s]]].x[j];
                for (std::size_t j = 0; j < dims; ++j) centroid[j] /= double(q - 1);

                std::vector<double> refl(dims);
                bool inside = true;
                for (std::size_t j = 0; j < dims; ++j) {
                    refl[j] = 2.0 * centroid[j] - pts[worst].x[j];
                    if (refl[j] < d.bounds.lo[j] || refl[j] > d.bounds.hi[j]) inside = false;
                }
                if (!inside)
                    for (std::size_t j = 0; j < dims; ++j)
                        refl[j] = rng.uniform(box.lo[j], box.hi[j]);
                double fr = d.eval(refl);
                if (fr < pts[worst].f) {
                    pts[worst] = {refl, fr};
                    continue;
                }
                if (d.exhausted()) break;
                std::vector<double> contr(dims);
                for (std::size_t j = 0; j < dims; ++j)
                    contr[j] = (centroid[j] + pts[worst].x[j]) / 2.0;
                double fc = d.eval(contr);
                if (fc < pts[worst].f) {
                    pts[worst] = {contr, fc};
                    continue;
                }
                if (d.exhausted()) break;
                std::vector<double> rand_pt(dims);
                for (std::size_t j = 0; j < dims; ++j)
                    rand_pt[j] = rng.uniform(box.lo[j], box.hi[j]);
                pts[worst] = {rand_pt, d.eval(rand_pt)};
            }
        }
    }
}

void run_ga(Driver& d, Rng& rng, const OptimizerSpec& spec) {
    const std::size_t dims = d.bounds.size();
    const std::size_t pop_size = std::size_t(spec.ga_population);
    struct Indiv {
        std::vector<double> x;
        double f;
    };
    std::vector<Indiv> pop;
    for (std::size_t i = 0; i < pop_size && !d.exhausted(); ++i) {
        auto x = uniform_point(d.bounds, rng);
        pop.push_back({x, d.eval(x)});
    }
    auto tournament = [&]() -> const Indiv& {
        std::size_t best = rng.next_below(pop.size());
        for (int k = 1; k < spec.ga_tournament; ++k) {
            std::size_t c = rng.next_below(pop.size());
            if (pop[c].f < pop[best].f) best = c;
        }
        return pop[best];
    };
    while (!d.exhausted()) {
        std::size_t elite = 0;
        for (std::size_t i = 1; i < pop.size(); ++i)
            if (pop[i].f < pop[elite].f) elite = i;
        std::vector<Indiv> next;
        next.push_back(pop[elite]); // kept without re-evaluation
        while (next.size() < pop_size && !d.exhausted()) {
            const Indiv& a = tournament();
            const Indiv& b = tournament();
            std::vector<double> child(dims);
            if (rng.chance(spec.ga_crossover_rate)) {
                for (std::size_t j = 0; j < dims; ++j) {
                    double clo = std::min(a.x[j], b.x[j]);
                    double chi = std::max(a.x[j], b.x[j]);
                    double span = chi - clo;
                    double g = rng.uniform(clo - spec.ga_blend_alpha * span,
                                           chi + spec.ga_blend_alpha * span);
                    child[j] = std::clamp(g, d.bounds.lo[j], d.bounds.hi[j]);
                }
            } else {
                child = a.x;
            }
            for (std::size_t j = 0; j < dims; ++j)
                if (rng.chance(spec.ga_mutation_rate)) {
                    double sigma = spec.ga_mutation_sigma * (d.bounds.hi[j] - d.bounds.lo[j]);
                    child[j] = std::clamp(child[j] + rng.gaussian(0.0, sigma), d.bounds.lo[j],
                                          d.bounds.hi[j]);
                }
            next.push_back({child, d.eval(child)});
        }
        if (next.size() == pop_size) pop = std::move(next);
    }
}

void check_spec(const OptimizerSpec& spec, const Bounds& bounds) {
    if (spec.budget < 1) throw SchemaError("optimizer budget must be at least 1");
    if (bounds.size() == 0) throw SchemaError("bounds are empty");
    if (bounds.lo.size() != bounds.hi.size())
        throw SchemaError("bounds lo/hi lengths differ");
    for (std::size_t i = 0; i < bounds.size(); ++i)
        if (bounds.lo[i] > bounds.hi[i])
            throw SchemaError("bounds inverted at dimension " + std::to_string(i));
    if (spec.sa_cooling <= 0.0 || spec.sa_cooling >= 1.0)
        throw SchemaError("SA cooling rate must be in (0, 1)");
    if (spec.sa_initial_temp <= 0.0) throw SchemaError("SA initial temperature must be > 0");
    if (spec.pso_swarm < 2) throw SchemaError("PSO swarm must have at least 2 particles");
    if (spec.sceua_complexes < 1) throw SchemaError("SCE-UA needs at least 1 complex");
    if (spec.ga_population < 2) throw SchemaError("GA population must be at least 2");
    if (spec.ga_tournament < 1) throw SchemaError("GA tournament size must be at least 1");
}

} // namespace

const char* to_string(Method m) {
    switch (m) {
    case Method::monte_carlo: return "monte_carlo";
    case Method::latin_hypercube: return "latin_hypercube";
    case Method::simulated_annealing: return "simulated_annealing";
    case Method::pso: return "pso";
    case Method::sceua: return "sceua";
    case Method::ga: return "ga";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "mc" || s == "monte_carlo") return Method::monte_carlo;
    if (s == "lhs" || s == "latin_hypercube") return Method::latin_hypercube;
    if (s == "sa" || s == "simulated_annealing") return Method::simulated_annealing;
    if (s == "pso") return Method::pso;
    if (s == "sceua") return Method::sceua;
    if (s == "ga") return Method::ga;
    throw SchemaError("unknown optimization method '" + s + "'");
}

EvaluationTrace optimize(const OptimizerSpec& spec, const Bounds& bounds,
                         const BoxObjective& objective) {
    check_spec(spec, bounds);
    Driver d{bounds, objective, spec.budget, {}};
    Rng rng(spec.seed);
    try {
        switch (spec.method) {
        case Method::monte_carlo: run_monte_carlo(d, rng); break;
        case Method::latin_hypercube: run_latin_hypercube(d, rng); break;
        case Method::simulated_annealing: run_simulated_annealing(d, rng, spec); break;
        case Method::pso: run_pso(d, rng, spec); break;
        case Method::sceua: run_sceua(d, rng, spec); break;
        case Method::ga: run_ga(d, rng, spec); break;
        }
    } catch (const AbortSignal&) {
        // partial trace with aborted flag already set
    }
    return d.trace;
}

ComparisonTable compare(const NetworkModel& model, const ParameterSpace& space,
                        const MeasurementSet& measurements, const SensorSet& sensors,
                        const std::vector<Method>& methods, bool include_es_neat,
                        std::size_t budget, std::uint64_t seed, const NeatConfig& neat_config,
                        const Objective& objective, double acceptance_threshold) {
    if (methods.empty() && !include_es_neat) throw ModelError("empty method list");
    if (space.empty()) throw ModelError("parameter space is empty");
    if (sensors.flow_sensors.empty() && sensors.pressure_sensors.empty())
        throw ModelError("no calibration sensors declared");

    // calibration-sensor measurements only, validated up front
    MeasurementSet calib;
    for (const auto& id : sensors.flow_sensors) {
        auto it = measurements.flow.find(id);
        if (it == measurements.flow.end())
            throw ModelError("no measurement series for flow sensor " + id);
        calib.flow.emplace(id, it->second);
    }
    for (const auto& id : sensors.pressure_sensors) {
        auto it = measurements.pressure.find(id);
        if (it == measurements.pressure.end())
            throw ModelError("no measurement series for pressure sensor " + id);
        calib.pressure.emplace(id, it->second);
    }

    auto vector_fitness = [&](const std::vector<double>& x) {
        ParameterVector v{x};
        NetworkModel applied = apply_parameters(model, space, v);
        SimulationResult sim;
        try {
            sim = simulate_eps(applied);
        } catch (const SolveFailure& f) {
            return kPenaltyBase + f.report().mean_mass_residual_lps;
        }
        auto obs = extract_observations(sim, sensors, false);
        return evaluate_objective(obs, calib, objective);
    };

    Bounds bounds;
    for (const auto& s : space.specs) {
        bounds.lo.push_back(s.lo);
        bounds.hi.push_back(s.hi);
    }

    ComparisonTable table;
    table.acceptance_threshold = acceptance_threshold;

    // the unoptimized starting point, for reference
    std::vector<double> base;
    for (const auto& s : space.specs)
        base.push_back(std::clamp(model_value(model, s), s.lo, s.hi));
    CompareEntry pre;
    pre.method = "pre_calibration";
    pre.final_best = vector_fitness(base);
    pre.evaluations = 0;
    pre.curve = {pre.final_best};
    pre.accepted = pre.final_best < acceptance_threshold;
    table.entries.push_back(pre);

    for (Method m : methods) {
        OptimizerSpec spec;
        spec.method = m;
        spec.budget = budget;
        spec.seed = mix_seed(seed, std::uint64_t(int(m)));
        auto trace = optimize(spec, bounds, vector_fitness);
        CompareEntry e;
        e.method = to_string(m);
        e.final_best = trace.final_best();
        e.evaluations = trace.evaluations();
        e.curve = trace.best_so_far;
        e.accepted = e.final_best < acceptance_threshold;
        table.entries.push_back(e);
    }

    if (include_es_neat) {
        const FeatureSet features = build_features(model);
        const int n_in = feature_width(space.specs, features.schema);
        const int n_out = int(output_kinds(space.specs).size());
        NeatConfig cfg = neat_config;
        cfg.seed = mix_seed(seed, 100);
        std::vector<double> curve;
        auto fit = [&](const Genome& g) {
            auto vals = decode(g, space.specs, features);
            double v = vector_fitness(vals);
            curve.push_back(curve.empty() ? v : std::min(curve.back(), v));
            return v;
        };
        auto pop = initial_population(n_in, n_out, cfg);
        if (curve.size() + std::size_t(cfg.population_size) <= budget) {
            while (curve.size() + std::size_t(cfg.population_size) <= budget) {
                evolve_generation(pop, fit, cfg, 1);
                if (pop.best_ever && pop.best_ever->fitness &&
                    *pop.best_ever->fitness <= cfg.fitness_threshold)
                    break;
            }
        } else {
            // budget smaller than one generation: score what fits
            for (std::size_t i = 0; i < budget; ++i) fit(pop.genomes[i]);
        }
        CompareEntry e;
        e.method = "es_neat";
        e.final_best = curve.empty() ? pre.final_best : curve.back();
        e.evaluations = curve.size();
        e.curve = curve;
        e.accepted = e.final_best < acceptance_threshold;
        table.entries.push_back(e);
    }

    std::stable_sort(table.entries.begin(), table.entries.end(),
                     [](const CompareEntry& a, const CompareEntry& b) {
                         return a.final_best < b.final_best;
                     });
    return table;
}

std::string comparison_to_csv(const ComparisonTable& table) {
    std::string out = "method,final_best,evaluations,accepted\n";
    for (const auto& e : table.entries)
        out += e.method + "," + format_double(e.final_best) + "," +
               std::to_string(e.evaluations) + "," + (e.accepted ? "1" : "0") + "\n";
    return out;
}

std::string curve_to_csv(const std::vector<double>& curve) {
    std::string out = "evaluation,best_so_far\n";
    for (std::size_t i = 0; i < curve.size(); ++i)
        out += std::to_string(i + 1) + "," + format_double(curve[i]) + "\n";
    return out;
}

} // namespace aquacal
