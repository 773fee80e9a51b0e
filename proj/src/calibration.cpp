#include "aquacal/calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "aquacal/common.hpp"

namespace aquacal {

namespace {

constexpr double kPenaltyBase = 1e6;
constexpr double kTimeTol = 1e-6; // s, for matching measurement to sim times

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / double(v.size()));
}

} // namespace

MeasurementSet parse_measurements_csv(const std::string& text) {
    MeasurementSet set;
    int line_no = 0;
    bool header_seen = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string line = text.substr(start, end == std::string::npos ? std::string::npos
                                                                       : end - start);
        start = end == std::string::npos ? text.size() + 1 : end + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_csv(line);
        if (!header_seen) {
            if (fields != std::vector<std::string>{"time_s", "element_kind", "element_id",
                                                   "quantity", "value"})
                throw ParseError(line_no, 1, "expected measurement CSV header "
                                             "time_s,element_kind,element_id,quantity,value");
            header_seen = true;
            continue;
        }
        if (fields.size() != 5)
            throw ParseError(line_no, 1, "expected 5 comma-separated fields, got " +
                                             std::to_string(fields.size()));
        auto t = parse_double(fields[0]);
        auto v = parse_double(fields[4]);
        if (!t) throw ParseError(line_no, 1, "bad time_s value '" + fields[0] + "'");
        if (!v) throw ParseError(line_no, 5, "bad value '" + fields[4] + "'");
        const std::string& kind = fields[1];
        const std::string& id = fields[2];
        const std::string& qty = fields[3];
        MeasurementSeries* series = nullptr;
        if (qty == "flow_lps") {
            if (kind != "pipe")
                throw ParseError(line_no, 2, "flow_lps requires element_kind pipe, got '" +
                                                 kind + "'");
            series = &set.flow[id];
        } else if (qty == "pressure_m") {
            if (kind != "junction")
                throw ParseError(line_no, 2, "pressure_m requires element_kind junction, got '" +
                                                 kind + "'");
            series = &set.pressure[id];
        } else {
            throw ParseError(line_no, 4, "unknown quantity '" + qty +
                                             "' (expected flow_lps or pressure_m)");
        }
        if (!series->times.empty() && *t <= series->times.back())
            throw ParseError(line_no, 1, "times not strictly increasing for sensor " + id);
        series->times.push_back(*t);
        series->values.push_back(*v);
    }
    if (!header_seen) throw ParseError(1, 1, "empty measurement CSV");
    return set;
}

std::string measurements_to_csv(const MeasurementSet& set) {
    std::string out = "time_s,element_kind,element_id,quantity,value\n";
    auto emit = [&out](const char* kind, const char* qty,
                       const std::map<std::string, MeasurementSeries>& m) {
        for (const auto& [id, s] : m)
            for (std::size_t i = 0; i < s.times.size(); ++i)
                out += format_double(s.times[i]) + "," + kind + "," + id + "," + qty + "," +
                       format_double(s.values[i]) + "\n";
    };
    emit("pipe", "flow_lps", set.flow);
    emit("junction", "pressure_m", set.pressure);
    return out;
}

SensorSet parse_sensor_file(const std::string& text) {
    SensorSet set;
    int line_no = 0;
    std::size_t start = 0;
    auto declared = [&set](const std::string& id) {
        auto in = [&id](const std::vector<std::string>& v) {
            return std::find(v.begin(), v.end(), id) != v.end();
        };
        return in(set.flow_sensors) || in(set.pressure_sensors) || in(set.holdout_flow) ||
               in(set.holdout_pressure);
    };
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string line = text.substr(start, end == std::string::npos ? std::string::npos
                                                                       : end - start);
        start = end == std::string::npos ? text.size() + 1 : end + 1;
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (tokens.size() != 3)
            throw ParseError(line_no, 1,
                             "expected 'sensor|holdout flow|pressure <element-id>'");
        const std::string& role = tokens[0];
        const std::string& kind = tokens[1];
        const std::string& id = tokens[2];
        if (role != "sensor" && role != "holdout")
            throw ParseError(line_no, 1, "unknown declaration '" + role + "'");
        if (kind != "flow" && kind != "pressure")
            throw ParseError(line_no, 1, "unknown sensor kind '" + kind + "'");
        if (declared(id))
            throw ParseError(line_no, 1, "sensor " + id + " declared twice");
        if (role == "sensor" && kind == "flow") set.flow_sensors.push_back(id);
        else if (role == "sensor") set.pressure_sensors.push_back(id);
        else if (kind == "flow") set.holdout_flow.push_back(id);
        else set.holdout_pressure.push_back(id);
    }
    return set;
}

std::string sensor_file_text(const SensorSet& sensors) {
    std::string out;
    for (const auto& id : sensors.flow_sensors) out += "sensor flow " + id + "\n";
    for (const auto& id : sensors.pressure_sensors) out += "sensor pressure " + id + "\n";
    for (const auto& id : sensors.holdout_flow) out += "holdout flow " + id + "\n";
    for (const auto& id : sensors.holdout_pressure) out += "holdout pressure " + id + "\n";
    return out;
}

MeasurementSet observations_to_measurements(const ObservationSet& obs) {
    MeasurementSet set;
    for (const auto& [id, series] : obs.flow)
        set.flow.emplace(id, MeasurementSeries{obs.timestamps, series});
    for (const auto& [id, series] : obs.pressure)
        set.pressure.emplace(id, MeasurementSeries{obs.timestamps, series});
    return set;
}

const char* to_string(ObjectiveKind k) {
    switch (k) {
    case ObjectiveKind::rmse: return "rmse";
    case ObjectiveKind::mae: return "mae";
    case ObjectiveKind::nse: return "nse";
    }
    return "?";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "rmse") return ObjectiveKind::rmse;
    if (s == "mae") return ObjectiveKind::mae;
    if (s == "nse") return ObjectiveKind::nse;
    throw SchemaError("unknown objective '" + s + "' (expected rmse, mae, or nse)");
}

const char* to_string(Normalization n) {
    return n == Normalization::raw ? "raw" : "per_sensor_std";
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "raw") return Normalization::raw;
    if (s == "per_sensor_std") return Normalization::per_sensor_std;
    throw SchemaError("unknown normalization '" + s + "' (expected raw or per_sensor_std)");
}

const char* to_string(Phase p) { return p == Phase::flow ? "flow" : "pressure"; }

Group phase_group(Phase p) { return p == Phase::flow ? Group::flow : Group::pressure; }

double evaluate_objective(const ObservationSet& sim, const MeasurementSet& obs,
                          const Objective& objective) {
    if (obs.empty()) throw ModelError("no measurements to score");
    double sum_sq = 0.0, sum_abs = 0.0, nse_sum = 0.0;
    std::size_t n = 0, sensors = 0;

    auto sim_index = [&sim](double t, const std::string& id) {
        const auto& ts = sim.timestamps;
        auto it = std::lower_bound(ts.begin(), ts.end(), t - kTimeTol);
        if (it == ts.end() || std::abs(*it - t) > kTimeTol)
            throw ModelError("measurement time " + format_double(t) + " for sensor " + id +
                             " does not match any simulation timestamp");
        return std::size_t(it - ts.begin());
    };

    auto score = [&](const std::string& id, const MeasurementSeries& m,
                     const std::vector<double>& s) {
        if (m.times.empty()) throw ModelError("empty measurement series for sensor " + id);
        double scale = 1.0;
        if (objective.normalization == Normalization::per_sensor_std)
            scale = std::max(population_std(m.values), 1e-6);
        double mean = 0.0;
        for (double v : m.values) mean += v;
        mean /= double(m.values.size());
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < m.times.size(); ++k) {
            double r = s[sim_index(m.times[k], id)] - m.values[k];
            sum_sq += (r / scale) * (r / scale);
            sum_abs += std::abs(r / scale);
            num += r * r;
            den += (m.values[k] - mean) * (m.values[k] - mean);
            ++n;
        }
        nse_sum += 1.0 - num / std::max(den, 1e-12);
        ++sensors;
    };

    for (const auto& [id, m] : obs.flow) {
        auto it = sim.flow.find(id);
        if (it == sim.flow.end())
            throw ModelError("no simulated series for flow sensor " + id);
        score(id, m, it->second);
    }
    for (const auto& [id, m] : obs.pressure) {
        auto it = sim.pressure.find(id);
        if (it == sim.pressure.end())
            throw ModelError("no simulated series for pressure sensor " + id);
        score(id, m, it->second);
    }
    if (n == 0) throw ModelError("no measurements to score");

    switch (objective.kind) {
    case ObjectiveKind::rmse: return std::sqrt(sum_sq / double(n));
    case ObjectiveKind::mae: return sum_abs / double(n);
    case ObjectiveKind::nse: return -(nse_sum / double(sensors));
    }
    throw SchemaError("unknown objective kind");
}

std::vector<ParameterKind> output_kinds(const std::vector<ParameterSpec>& specs) {
    std::vector<ParameterKind> kinds;
    for (ParameterKind k : {ParameterKind::roughness, ParameterKind::minor_loss,
                            ParameterKind::base_demand, ParameterKind::leak_coeff,
                            ParameterKind::valve_loss}) {
        for (const auto& s : specs)
            if (s.parameter == k) {
                kinds.push_back(k);
                break;
            }
    }
    return kinds;
}

int feature_width(const std::vector<ParameterSpec>& specs, const FeatureSchema& schema) {
    std::size_t w = 0;
    for (ElementKind k : {ElementKind::junction, ElementKind::pipe, ElementKind::valve}) {
        bool present = false;
        for (const auto& s : specs)
            if (s.element_kind == k) {
                present = true;
                break;
            }
        if (present) w = std::max(w, schema.for_kind(k).size());
    }
    return int(w);
}

std::vector<double> decode(const Genome& genome, const std::vector<ParameterSpec>& specs,
                           const FeatureSet& features) {
    auto kinds = output_kinds(specs);
    if (int(kinds.size()) != genome.n_outputs)
        throw SchemaError("genome has " + std::to_string(genome.n_outputs) +
                          " outputs but the group has " + std::to_string(kinds.size()) +
                          " parameter kinds");
    int slot_of[6];
    for (int i = 0; i < 6; ++i) slot_of[i] = -1;
    for (std::size_t i = 0; i < kinds.size(); ++i) slot_of[int(kinds[i])] = int(i);

    std::vector<double> values;
    values.reserve(specs.size());
    std::vector<double> outputs;
    std::string cur_id;
    bool have = false;
    ElementKind cur_kind = ElementKind::pipe;
    for (const auto& spec : specs) {
        if (!have || spec.element_kind != cur_kind || spec.element_id != cur_id) {
            const auto& feat = features.vector_for(spec.element_kind, spec.element_id);
            if (int(feat.size()) > genome.n_inputs)
                throw SchemaError("feature vector for " + spec.label() + " has " +
                                  std::to_string(feat.size()) + " entries but the genome takes " +
                                  std::to_string(genome.n_inputs));
            std::vector<double> in(feat);
            in.resize(std::size_t(genome.n_inputs), 0.0); // pad narrower kinds
            outputs = activate(genome, in);
            cur_id = spec.element_id;
            cur_kind = spec.element_kind;
            have = true;
        }
        double y = std::clamp(outputs[std::size_t(slot_of[int(spec.parameter)])], -1.0, 1.0);
        values.push_back(spec.lo + (y + 1.0) / 2.0 * (spec.hi - spec.lo));
    }
    return values;
}

namespace {

std::vector<ParameterSpec> specs_at(const ParameterSpace& space,
                                    const std::vector<std::size_t>& idx) {
    std::vector<ParameterSpec> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(space.specs[i]);
    return out;
}

MeasurementSet filter_measurements(const MeasurementSet& all,
                                   const std::vector<std::string>& flow_ids,
                                   const std::vector<std::string>& pressure_ids,
                                   const char* role) {
    MeasurementSet out;
    for (const auto& id : flow_ids) {
        auto it = all.flow.find(id);
        if (it == all.flow.end())
            throw ModelError(std::string("no measurement series for ") + role +
                             " flow sensor " + id);
        out.flow.emplace(id, it->second);
    }
    for (const auto& id : pressure_ids) {
        auto it = all.pressure.find(id);
        if (it == all.pressure.end())
            throw ModelError(std::string("no measurement series for ") + role +
                             " pressure sensor " + id);
        out.pressure.emplace(id, it->second);
    }
    return out;
}

} // namespace

double phase_fitness(const Genome& genome, Phase phase, const ParameterVector& frozen,
                     const NetworkModel& model, const ParameterSpace& space,
                     const FeatureSet& features, const MeasurementSet& measurements,
                     const SensorSet& sensors, const Objective& objective) {
    const auto& idx = phase == Phase::flow ? space.flow_indices : space.pressure_indices;
    auto specs = specs_at(space, idx);
    auto vals = decode(genome, specs, features);
    ParameterVector vec = frozen;
    if (vec.values.size() != space.size())
        throw SchemaError("frozen vector length does not match parameter space");
    for (std::size_t k = 0; k < idx.size(); ++k) vec.values[idx[k]] = vals[k];

    NetworkModel applied = apply_parameters(model, space, vec);
    SimulationResult sim;
    try {
        sim = simulate_eps(applied);
    } catch (const SolveFailure& f) {
        return kPenaltyBase + f.report().mean_mass_residual_lps;
    }

    SensorSet phase_sensors;
    MeasurementSet phase_meas;
    if (phase == Phase::flow) {
        phase_sensors.flow_sensors = sensors.flow_sensors;
        phase_meas = filter_measurements(measurements, sensors.flow_sensors, {}, "calibration");
    } else {
        phase_sensors.pressure_sensors = sensors.pressure_sensors;
        phase_meas =
            filter_measurements(measurements, {}, sensors.pressure_sensors, "calibration");
    }
    auto obs = extract_observations(sim, phase_sensors, false);
    return evaluate_objective(obs, phase_meas, objective);
}

CalibrationRun calibrate(const NetworkModel& model, const ParameterSpace& space,
                         const MeasurementSet& measurements, const SensorSet& sensors,
                         const NeatConfig& neat_config, const LoopConfig& loop,
                         const Genome* flow_seed, const Genome* pressure_seed) {
    const auto t0 = std::chrono::steady_clock::now();
    if (space.empty()) throw ModelError("parameter space is empty");
    if (sensors.flow_sensors.empty() && sensors.pressure_sensors.empty())
        throw ModelError("no calibration sensors declared");

    CalibrationRun run;
    auto flow_specs = specs_at(space, space.flow_indices);
    auto pressure_specs = specs_at(space, space.pressure_indices);
    const bool flow_active = !flow_specs.empty() && !sensors.flow_sensors.empty();
    const bool pressure_active = !pressure_specs.empty() && !sensors.pressure_sensors.empty();
    if (!flow_active && !pressure_active)
        throw ModelError("no runnable phase: need calibration sensors and parameters "
                         "of a matching group");
    if (!flow_active)
        run.warnings.push_back({Severity::warning, "calibrate",
                                "flow phase skipped (no flow-group parameters or no flow "
                                "sensors); running pressure only"});
    if (!pressure_active)
        run.warnings.push_back({Severity::warning, "calibrate",
                                "pressure phase skipped (no pressure-group parameters or no "
                                "pressure sensors); running flow only"});

    // Fail early if a declared calibration sensor has no data.
    const MeasurementSet calib_meas = filter_measurements(
        measurements, sensors.flow_sensors, sensors.pressure_sensors, "calibration");

    const FeatureSet features = build_features(model);
    const std::size_t n = space.size();

    ParameterVector frozen;
    frozen.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) frozen.values[i] = prior_midpoint(space.specs[i]);

    ParameterVector base;
    base.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = space.specs[i];
        base.values[i] = std::clamp(model_value(model, s), s.lo, s.hi);
    }

    const Objective combined_objective{loop.objective.kind, Normalization::per_sensor_std};
    auto combined = [&](const ParameterVector& v) {
        ++run.simulation_count;
        NetworkModel applied = apply_parameters(model, space, v);
        SimulationResult sim;
        try {
            sim = simulate_eps(applied);
        } catch (const SolveFailure& f) {
            return kPenaltyBase + f.report().mean_mass_residual_lps;
        }
        auto obs = extract_observations(sim, sensors, false);
        return evaluate_objective(obs, calib_meas, combined_objective);
    };

    double best = combined(base);
    ParameterVector best_vec = base;

    auto finish = [&]() {
        run.final_vector = best_vec;
        run.calibration_objective = best;
        const bool holdout = !sensors.holdout_flow.empty() || !sensors.holdout_pressure.empty();
        bool holdout_data = holdout;
        for (const auto& id : sensors.holdout_flow)
            if (!measurements.flow.count(id)) holdout_data = false;
        for (const auto& id : sensors.holdout_pressure)
            if (!measurements.pressure.count(id)) holdout_data = false;
        if (holdout && !holdout_data)
            run.warnings.push_back({Severity::warning, "calibrate",
                                    "holdout sensors declared but measurements are missing; "
                                    "validation skipped"});
        if (holdout_data) {
            ++run.simulation_count;
            run.validation_objective =
                validate_run(run, model, space, measurements, sensors, combined_objective);
        }
        run.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (best <= neat_config.fitness_threshold) {
        // Already within target on the starting model; no evolution needed.
        finish();
        return run;
    }

    std::optional<Genome> flow_best, pressure_best;
    auto run_phase = [&](Phase phase, const std::vector<ParameterSpec>& specs,
                         const std::vector<std::size_t>& idx, std::optional<Genome>& best_genome,
                         const Genome* user_seed, std::vector<std::vector<double>>& history,
                         std::vector<std::vector<double>>& mean_history, std::uint64_t salt) {
        NeatConfig cfg = neat_config;
        cfg.seed = mix_seed(neat_config.seed, salt);
        const int n_in = feature_width(specs, features.schema);
        const int n_out = int(output_kinds(specs).size());
        const Genome* seed = best_genome ? &*best_genome : user_seed;
        auto fit = [&](const Genome& g) {
            return phase_fitness(g, phase, frozen, model, space, features, calib_meas, sensors,
                                 loop.objective);
        };
        NeatResult res = run_neat(n_in, n_out, fit, cfg, seed, loop.threads);
        run.simulation_count += res.evaluations;
        history.push_back(res.history);
        mean_history.push_back(res.mean_history);
        best_genome = res.best;
        auto vals = decode(res.best, specs, features);
        for (std::size_t k = 0; k < idx.size(); ++k) frozen.values[idx[k]] = vals[k];
        double obj = combined(frozen);
        if (obj < best) {
            best = obj;
            best_vec = frozen;
        }
    };

    for (int iter = 1; iter <= loop.outer_iterations; ++iter) {
        run.outer_iterations = iter;
        const double prev = best;
        if (flow_active) {
            run_phase(Phase::flow, flow_specs, space.flow_indices, flow_best, flow_seed,
                      run.flow_history, run.flow_mean_history, std::uint64_t(2 * iter));
            if (best <= neat_config.fitness_threshold) break;
        }
        if (pressure_active) {
            run_phase(Phase::pressure, pressure_specs, space.pressure_indices, pressure_best,
                      pressure_seed, run.pressure_history, run.pressure_mean_history,
                      std::uint64_t(2 * iter + 1));
            if (best <= neat_config.fitness_threshold) break;
        }
        if (prev - best < loop.improvement_tol * std::max(prev, 1e-12)) break;
    }

    run.flow_genome = flow_best;
    run.pressure_genome = pressure_best;
    finish();
    return run;
}

double validate_run(const CalibrationRun& run, const NetworkModel& model,
                    const ParameterSpace& space, const MeasurementSet& measurements,
                    const SensorSet& sensors, const Objective& objective) {
    if (sensors.holdout_flow.empty() && sensors.holdout_pressure.empty())
        throw ModelError("no holdout sensors declared");
    const MeasurementSet holdout_meas = filter_measurements(
        measurements, sensors.holdout_flow, sensors.holdout_pressure, "holdout");
    NetworkModel applied = apply_parameters(model, space, run.final_vector);
    auto sim = simulate_eps(applied);
    SensorSet holdout;
    holdout.flow_sensors = sensors.holdout_flow;
    holdout.pressure_sensors = sensors.holdout_pressure;
    auto obs = extract_observations(sim, holdout, false);
    return evaluate_objective(obs, holdout_meas, objective);
}

} // namespace aquacal
