// aquacal command line tool. Every command writes its artifacts plus a
// manifest.json into --out and never touches anything outside it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aquacal/archive.hpp"
#include "aquacal/calibration.hpp"
#include "aquacal/common.hpp"
#include "aquacal/features.hpp"
#include "aquacal/hydraulics.hpp"
#include "aquacal/inp.hpp"
#include "aquacal/model.hpp"
#include "aquacal/optimize.hpp"
#include "aquacal/params.hpp"
#include "aquacal/rng.hpp"
#include "aquacal/rules.hpp"
#include "aquacal/synth.hpp"
#include "aquacal/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aquacal;

namespace {

// Exit codes, kept stable: 0 ok, 1 usage/internal, 2 parse or validation,
// 3 convergence, 4 I/O, 5 rule conflict, 6 incompatible seed archive.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitRuleConflict = 5;
constexpr int kExitSeedRejected = 6;

struct RuleConflict : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SeedRejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path);
    return ss.str();
}

std::string iso_utc(std::time_t t) {
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string now_iso() { return iso_utc(std::time(nullptr)); }

// Archives must be byte-identical across reruns, so their timestamp cannot
// come from the wall clock. SOURCE_DATE_EPOCH (the reproducible-build
// convention) or --stamp supplies a real time when provenance matters.
std::string default_stamp() {
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"))
        if (auto v = parse_long(trim(env))) return iso_utc(std::time_t(*v));
    return "1970-01-01T00:00:00Z";
}

struct Ctx {
    std::string command;
    std::vector<std::string> argv;
    fs::path out = ".";
    std::uint64_t seed = 0;
    int threads = 1;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> overrides;
    std::vector<std::string> outputs;
    json extra = json::object();
    std::string start_time;
};

void write_file_raw(const fs::path& dir, const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    const fs::path path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << content;
    f.flush();
    if (!f) throw IoError("write failed: " + path.string());
}

void emit(Ctx& ctx, const std::string& name, const std::string& content) {
    write_file_raw(ctx.out, name, content);
    ctx.outputs.push_back(name);
}

std::string read_input(Ctx& ctx, const std::string& label, const std::string& path) {
    ctx.inputs[label] = path;
    return read_file(path);
}

void write_manifest(Ctx& ctx, int exit_code) {
    json j;
    j["command"] = ctx.command;
    j["argv"] = ctx.argv;
    j["inputs"] = ctx.inputs;
    j["seed"] = ctx.seed;
    j["threads"] = ctx.threads;
    j["config_overrides"] = ctx.overrides;
    j["output_dir"] = ctx.out.string();
    j["outputs"] = ctx.outputs;
    j["start_time"] = ctx.start_time;
    j["end_time"] = now_iso();
    j["exit_code"] = exit_code;
    j["tool_version"] = kToolVersion;
    for (auto& [k, v] : ctx.extra.items()) j[k] = v;
    try {
        write_file_raw(ctx.out, "manifest.json", j.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "warning: could not write manifest: " << e.what() << "\n";
    }
}

int run_command(Ctx& ctx, const std::function<void()>& body) {
    int code = kExitOk;
    std::string error;
    try {
        body();
    } catch (const RuleConflict& e) {
        code = kExitRuleConflict;
        error = e.what();
    } catch (const SeedRejected& e) {
        code = kExitSeedRejected;
        error = e.what();
    } catch (const SolveFailure& e) {
        code = kExitConvergence;
        error = e.what();
    } catch (const ParseError& e) {
        code = kExitInput;
        error = e.what();
    } catch (const SchemaError& e) {
        code = kExitInput;
        error = e.what();
    } catch (const BoundsError& e) {
        code = kExitInput;
        error = e.what();
    } catch (const ModelError& e) {
        code = kExitInput;
        error = e.what();
    } catch (const IoError& e) {
        code = kExitIo;
        error = e.what();
    } catch (const fs::filesystem_error& e) {
        code = kExitIo;
        error = e.what();
    } catch (const std::exception& e) {
        code = kExitUsage;
        error = e.what();
    }
    if (!error.empty()) std::cerr << "error: " << error << "\n";
    write_manifest(ctx, code);
    return code;
}

// ---- configuration file: `key = value` lines under [neat] / [loop] ----

struct ToolConfig {
    NeatConfig neat;
    LoopConfig loop;
};

void set_config_value(ToolConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value, int line) {
    auto bad = [&](const std::string& what) {
        throw SchemaError("config line " + std::to_string(line) + ": " + what);
    };
    auto as_double = [&]() {
        auto v = parse_double(value);
        if (!v) bad("value '" + value + "' for " + key + " is not a number");
        return *v;
    };
    auto as_int = [&]() {
        auto v = parse_long(value);
        if (!v) bad("value '" + value + "' for " + key + " is not an integer");
        return int(*v);
    };
    if (section == "neat") {
        NeatConfig& n = cfg.neat;
        if (key == "population_size") n.population_size = as_int();
        else if (key == "max_generations") n.max_generations = as_int();
        else if (key == "fitness_threshold") n.fitness_threshold = as_double();
        else if (key == "add_connection_rate") n.add_connection_rate = as_double();
        else if (key == "add_node_rate") n.add_node_rate = as_double();
        else if (key == "remove_connection_rate") n.remove_connection_rate = as_double();
        else if (key == "remove_node_rate") n.remove_node_rate = as_double();
        else if (key == "weight_perturb_rate") n.weight_perturb_rate = as_double();
        else if (key == "weight_perturb_sigma") n.weight_perturb_sigma = as_double();
        else if (key == "weight_replace_rate") n.weight_replace_rate = as_double();
        else if (key == "c1") n.c1 = as_double();
        else if (key == "c2") n.c2 = as_double();
        else if (key == "c3") n.c3 = as_double();
        else if (key == "compatibility_threshold") n.compatibility_threshold = as_double();
        else if (key == "stagnation_limit") n.stagnation_limit = as_int();
        else if (key == "elitism") n.elitism = as_int();
        else if (key == "survival_fraction") n.survival_fraction = as_double();
        else if (key == "seed") {
            try {
                n.seed = std::stoull(value);
            } catch (const std::exception&) {
                bad("value '" + value + "' for seed is not an unsigned integer");
            }
        } else bad("unknown key '" + key + "' in [neat]");
    } else if (section == "loop") {
        LoopConfig& l = cfg.loop;
        if (key == "outer_iterations") l.outer_iterations = as_int();
        else if (key == "improvement_tol") l.improvement_tol = as_double();
        else if (key == "objective") l.objective.kind = objective_kind_from_string(value);
        else if (key == "normalization") l.objective.normalization = normalization_from_string(value);
        else if (key == "threads") l.threads = as_int();
        else bad("unknown key '" + key + "' in [loop]");
    } else {
        bad("unknown section [" + section + "]");
    }
}

void apply_config_file(ToolConfig& cfg, const std::string& text,
                       std::map<std::string, std::string>& overrides) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw SchemaError("config line " + std::to_string(lineno) + ": unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw SchemaError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (section.empty())
            throw SchemaError("config line " + std::to_string(lineno) + ": key '" + key +
                              "' appears before any [section]");
        set_config_value(cfg, section, key, value, lineno);
        overrides[section + "." + key] = value;
    }
}

std::string dump_config(const ToolConfig& cfg) {
    std::ostringstream os;
    const NeatConfig& n = cfg.neat;
    const LoopConfig& l = cfg.loop;
    os << "[neat]\n";
    os << "population_size = " << n.population_size << "\n";
    os << "max_generations = " << n.max_generations << "\n";
    os << "fitness_threshold = " << format_double(n.fitness_threshold) << "\n";
    os << "add_connection_rate = " << format_double(n.add_connection_rate) << "\n";
    os << "add_node_rate = " << format_double(n.add_node_rate) << "\n";
    os << "remove_connection_rate = " << format_double(n.remove_connection_rate) << "\n";
    os << "remove_node_rate = " << format_double(n.remove_node_rate) << "\n";
    os << "weight_perturb_rate = " << format_double(n.weight_perturb_rate) << "\n";
    os << "weight_perturb_sigma = " << format_double(n.weight_perturb_sigma) << "\n";
    os << "weight_replace_rate = " << format_double(n.weight_replace_rate) << "\n";
    os << "c1 = " << format_double(n.c1) << "\n";
    os << "c2 = " << format_double(n.c2) << "\n";
    os << "c3 = " << format_double(n.c3) << "\n";
    os << "compatibility_threshold = " << format_double(n.compatibility_threshold) << "\n";
    os << "stagnation_limit = " << n.stagnation_limit << "\n";
    os << "elitism = " << n.elitism << "\n";
    os << "survival_fraction = " << format_double(n.survival_fraction) << "\n";
    os << "seed = " << n.seed << "\n";
    os << "\n[loop]\n";
    os << "outer_iterations = " << l.outer_iterations << "\n";
    os << "improvement_tol = " << format_double(l.improvement_tol) << "\n";
    os << "objective = " << to_string(l.objective.kind) << "\n";
    os << "normalization = " << to_string(l.objective.normalization) << "\n";
    os << "threads = " << l.threads << "\n";
    return os.str();
}

// ---- shared loading helpers ----

NetworkModel load_model(Ctx& ctx, const std::string& label, const std::string& path) {
    InpParseResult parsed = parse_inp(read_input(ctx, label, path));
    for (const auto& d : parsed.diagnostics) std::cerr << path << ": " << to_string(d) << "\n";
    auto diags = validate(parsed.model);
    for (const auto& d : diags) std::cerr << path << ": " << to_string(d) << "\n";
    if (has_errors(diags)) throw ModelError(path + ": model validation failed");
    return parsed.model;
}

ParameterSpace compile_checked(const std::vector<Rule>& rules, const NetworkModel& model) {
    try {
        return compile_rules(rules, model);
    } catch (const ModelError& e) {
        throw RuleConflict(e.what());
    }
}

std::string sanitize_id(const std::string& id) {
    std::string out;
    for (char c : id)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

std::string history_csv(const std::vector<std::vector<double>>& best,
                        const std::vector<std::vector<double>>& mean) {
    std::ostringstream os;
    os << "generation,best,mean\n";
    int gen = 0;
    for (std::size_t outer = 0; outer < best.size(); ++outer)
        for (std::size_t i = 0; i < best[outer].size(); ++i, ++gen) {
            const double m = (outer < mean.size() && i < mean[outer].size()) ? mean[outer][i]
                                                                             : best[outer][i];
            os << gen << ',' << format_double(best[outer][i]) << ',' << format_double(m) << "\n";
        }
    return os.str();
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Indices into `sim_t` matching each (strictly increasing) measurement time.
std::vector<std::size_t> match_times(const std::vector<double>& sim_t,
                                     const std::vector<double>& meas_t, const std::string& what) {
    std::vector<std::size_t> idx;
    std::size_t j = 0;
    for (double t : meas_t) {
        while (j < sim_t.size() && sim_t[j] < t - 1e-6) ++j;
        if (j >= sim_t.size() || std::abs(sim_t[j] - t) > 1e-6)
            throw SchemaError(what + ": measurement time " + format_double(t) +
                              " s has no matching simulated state");
        idx.push_back(j);
    }
    return idx;
}

// ---- commands ----

void cmd_simulate(Ctx& ctx, const std::string& inp, double duration, double step) {
    NetworkModel model = load_model(ctx, "inp", inp);
    const double d = duration > 0 ? duration : model.options.duration_s;
    const double s = step > 0 ? step : model.options.hydraulic_step_s;
    SimulationResult result = simulate_eps(model, d, s);
    emit(ctx, "simulation.csv", simulation_to_csv(result));
    int max_iter = 0;
    for (const auto& st : result.states) max_iter = std::max(max_iter, st.iterations);
    ctx.extra["timesteps"] = result.states.size();
    std::cout << "simulated " << result.states.size() << " timesteps (" << format_double(s)
              << " s step, " << format_double(d) << " s horizon), max " << max_iter
              << " solver iterations\n";
}

void cmd_validate(Ctx& ctx, const std::string& inp) {
    InpParseResult parsed = parse_inp(read_input(ctx, "inp", inp));
    std::ostringstream os;
    for (const auto& d : parsed.diagnostics) os << to_string(d) << "\n";
    auto diags = validate(parsed.model);
    for (const auto& d : diags) os << to_string(d) << "\n";
    int errors = 0;
    for (const auto& d : diags)
        if (d.severity == Severity::error) ++errors;
    const NetworkModel& m = parsed.model;
    os << "elements: " << m.junctions.size() << " junctions, " << m.reservoirs.size()
       << " reservoirs, " << m.pipes.size() << " pipes, " << m.valves.size() << " valves\n";
    os << (errors ? "validation failed with " + std::to_string(errors) + " error(s)\n"
                  : "validation ok\n");
    std::cout << os.str();
    emit(ctx, "diagnostics.txt", os.str());
    if (errors) throw ModelError(inp + ": validation failed with " + std::to_string(errors) +
                                 " error(s)");
}

void cmd_synth(Ctx& ctx, SynthSpec spec) {
    if (spec.profile == "fossolo-like") spec.profile = "fossolo";
    SynthProblem problem = generate_synthetic(spec);
    emit(ctx, "network.inp", write_inp(problem.base));
    emit(ctx, "truth.inp", write_inp(problem.truth));
    emit(ctx, "measurements.csv", measurements_to_csv(problem.measurements));
    emit(ctx, "sensors.txt", sensor_file_text(problem.sensors));
    emit(ctx, "rules.txt", problem.rules_text);
    ctx.extra["artifacts"] = {{"network", "network.inp"},
                              {"truth", "truth.inp"},
                              {"measurements", "measurements.csv"},
                              {"sensors", "sensors.txt"},
                              {"rules", "rules.txt"}};
    ctx.extra["profile"] = spec.profile;
    ctx.extra["demand_scale"] = problem.demand_scale;
    ctx.extra["junctions"] = problem.base.junctions.size();
    ctx.extra["pipes"] = problem.base.pipes.size();
    std::cout << "generated " << spec.profile << " problem: " << problem.base.junctions.size()
              << " junctions, " << problem.base.pipes.size() << " pipes, demand scale "
              << format_double(problem.demand_scale) << "\n";
    auto list = [](const std::vector<std::string>& ids) {
        std::string s;
        for (const auto& id : ids) s += (s.empty() ? "" : " ") + id;
        return s;
    };
    std::cout << "flow sensors: " << list(problem.sensors.flow_sensors) << " (holdout "
              << list(problem.sensors.holdout_flow) << ")\n";
    std::cout << "pressure sensors: " << list(problem.sensors.pressure_sensors) << " (holdout "
              << list(problem.sensors.holdout_pressure) << ")\n";
}

void cmd_rules_check(Ctx& ctx, const std::string& inp, const std::string& rules_path) {
    NetworkModel model = load_model(ctx, "inp", inp);
    auto rules = parse_rules(read_input(ctx, "rules", rules_path));
    ParameterSpace space = compile_checked(rules, model);

    std::map<std::string, int> per_kind;
    std::ostringstream csv;
    csv << "element_kind,element_id,parameter,lo,hi,group,prior\n";
    for (const auto& s : space.specs) {
        per_kind[to_string(s.parameter)]++;
        csv << to_string(s.element_kind) << ',' << s.element_id << ',' << to_string(s.parameter)
            << ',' << format_double(s.lo) << ',' << format_double(s.hi) << ',' << to_string(s.group)
            << ',';
        if (s.prior.kind == PriorKind::triangular)
            csv << "triangular:" << format_double(s.prior.mode);
        else
            csv << "uniform";
        csv << "\n";
    }
    emit(ctx, "parameters.csv", csv.str());
    std::cout << rules.size() << " rules bound " << space.size() << " parameters ("
              << space.flow_indices.size() << " flow group, " << space.pressure_indices.size()
              << " pressure group)\n";
    for (const auto& [kind, count] : per_kind) std::cout << "  " << kind << ": " << count << "\n";
    ctx.extra["parameters"] = space.size();
}

struct CalibrateArgs {
    std::string inp, rules, measurements, sensors, seed_archive, stamp;
    bool seed_optional = false;
};

void cmd_calibrate(Ctx& ctx, const CalibrateArgs& a, const ToolConfig& cfg) {
    NetworkModel model = load_model(ctx, "inp", a.inp);
    const std::string rules_text = read_input(ctx, "rules", a.rules);
    auto rules = parse_rules(rules_text);
    ParameterSpace space = compile_checked(rules, model);
    if (space.empty())
        std::cerr << "warning: no model element matches any rule; nothing to calibrate\n";
    MeasurementSet measurements = parse_measurements_csv(read_input(ctx, "measurements", a.measurements));
    SensorSet sensors = parse_sensor_file(read_input(ctx, "sensors", a.sensors));

    const Genome* flow_seed = nullptr;
    const Genome* pressure_seed = nullptr;
    std::optional<SeedResult> seeded;
    if (!a.seed_archive.empty()) {
        RunArchive seed_arch = load_archive(read_input(ctx, "seed_archive", a.seed_archive));
        seeded = seed_calibration(seed_arch, model, space);
        for (const auto& w : seeded->warnings) std::cerr << "warning: " << w << "\n";
        if (!seeded->compatible()) {
            for (const auto& m : seeded->mismatches)
                std::cerr << "incompatible seed archive: " << m << "\n";
            if (!a.seed_optional)
                throw SeedRejected("seed archive is incompatible with this problem (" +
                                   std::to_string(seeded->mismatches.size()) +
                                   " mismatch(es) above); pass --seed-optional to cold start instead");
            std::cerr << "warning: cold starting (--seed-optional)\n";
        } else {
            if (seeded->flow) flow_seed = &*seeded->flow;
            if (seeded->pressure) pressure_seed = &*seeded->pressure;
        }
    }

    CalibrationRun run =
        calibrate(model, space, measurements, sensors, cfg.neat, cfg.loop, flow_seed, pressure_seed);
    for (const auto& w : run.warnings) std::cerr << to_string(w) << "\n";

    auto [flow_specs, pressure_specs] = group_parameters(space);
    ArchiveContext actx;
    actx.created_at = a.stamp.empty() ? default_stamp() : a.stamp;
    actx.model_fingerprint = model_fingerprint(model);
    actx.rules_fingerprint = text_fingerprint(rules_text);
    actx.schema = build_features(model).schema;
    actx.flow_kinds = output_kinds(flow_specs);
    actx.pressure_kinds = output_kinds(pressure_specs);
    actx.neat = cfg.neat;
    actx.loop = cfg.loop;
    actx.objective = cfg.loop.objective;
    RunArchive archive = make_archive(run, actx);
    emit(ctx, "run.archive", save_archive(archive));
    emit(ctx, "flow_fitness.csv", history_csv(run.flow_history, run.flow_mean_history));
    emit(ctx, "pressure_fitness.csv", history_csv(run.pressure_history, run.pressure_mean_history));
    emit(ctx, "calibrated.inp", write_inp(apply_parameters(model, space, run.final_vector)));

    std::ostringstream rep;
    rep << "calibration objective (combined per-sensor-std " << to_string(cfg.loop.objective.kind)
        << "): " << format_double(run.calibration_objective) << "\n";
    if (std::isfinite(run.validation_objective))
        rep << "validation objective (holdout sensors): " << format_double(run.validation_objective)
            << "\n";
    else
        rep << "validation objective: n/a (no holdout measurements)\n";
    auto first_best = [](const std::vector<std::vector<double>>& h) -> std::optional<double> {
        if (h.empty() || h.front().empty()) return std::nullopt;
        return h.front().front();
    };
    if (auto g0 = first_best(run.flow_history))
        rep << "generation-0 best (flow): " << format_double(*g0) << "\n";
    if (auto g0 = first_best(run.pressure_history))
        rep << "generation-0 best (pressure): " << format_double(*g0) << "\n";
    rep << "outer iterations: " << run.outer_iterations << "\n";
    rep << "simulations: " << run.simulation_count << "\n";
    rep << "parameters: " << space.size() << "\n";
    rep << "seeded: flow " << (flow_seed ? "yes" : "no") << ", pressure "
        << (pressure_seed ? "yes" : "no") << "\n";
    for (const auto& w : run.warnings) rep << to_string(w) << "\n";
    emit(ctx, "calibration_report.txt", rep.str());
    std::cout << rep.str();
    // Wall time goes to stdout only; report files must replay byte-identically.
    std::cout << "wall time: " << format_double(run.wall_time_s) << " s\n";

    ctx.extra["calibration_objective"] = run.calibration_objective;
    if (std::isfinite(run.validation_objective))
        ctx.extra["validation_objective"] = run.validation_objective;
    ctx.extra["simulations"] = run.simulation_count;
    ctx.extra["archive_created_at"] = actx.created_at;
}

struct CompareArgs {
    std::string inp, rules, measurements, sensors;
    std::string methods = "mc,lhs,sa,pso,sceua,ga,es-neat";
    std::size_t budget = 1000;
    int seeds = 1;
    double threshold = 3.0;
    std::string objective = "rmse";
    std::string normalization = "per_sensor_std";
};

void cmd_compare(Ctx& ctx, const CompareArgs& a, const ToolConfig& cfg) {
    NetworkModel model = load_model(ctx, "inp", a.inp);
    auto rules = parse_rules(read_input(ctx, "rules", a.rules));
    ParameterSpace space = compile_checked(rules, model);
    MeasurementSet measurements = parse_measurements_csv(read_input(ctx, "measurements", a.measurements));
    SensorSet sensors = parse_sensor_file(read_input(ctx, "sensors", a.sensors));
    if (a.seeds < 1) throw SchemaError("--seeds must be at least 1");

    std::vector<Method> methods;
    bool include_es_neat = false;
    std::istringstream ms(a.methods);
    std::string token;
    while (std::getline(ms, token, ',')) {
        std::string t(trim(token));
        if (t.empty()) continue;
        std::string lt = lower(t);
        if (lt == "es-neat" || lt == "es_neat" || lt == "esneat" || lt == "neat")
            include_es_neat = true;
        else
            methods.push_back(method_from_string(t));
    }

    Objective objective{objective_kind_from_string(a.objective),
                        normalization_from_string(a.normalization)};

    struct Agg {
        std::vector<double> finals;
        std::vector<double> evals;
        int accepted = 0;
    };
    std::map<std::string, Agg> by_method;

    for (int k = 0; k < a.seeds; ++k) {
        const std::uint64_t seed_k = ctx.seed + std::uint64_t(k);
        ComparisonTable table = compare(model, space, measurements, sensors, methods,
                                        include_es_neat, a.budget, seed_k, cfg.neat, objective,
                                        a.threshold);
        emit(ctx, "comparison_seed" + std::to_string(k) + ".csv", comparison_to_csv(table));
        for (const auto& entry : table.entries) {
            if (entry.method != "pre_calibration")
                emit(ctx, "curve_" + entry.method + "_seed" + std::to_string(k) + ".csv",
                     curve_to_csv(entry.curve));
            Agg& agg = by_method[entry.method];
            agg.finals.push_back(entry.final_best);
            agg.evals.push_back(double(entry.evaluations));
            if (entry.accepted) ++agg.accepted;
        }
    }

    struct Row {
        std::string method;
        double med, mean, frac, evals;
    };
    std::vector<Row> rows;
    for (const auto& [name, agg] : by_method) {
        double mean = 0;
        for (double v : agg.finals) mean += v;
        mean /= double(agg.finals.size());
        rows.push_back({name, median_of(agg.finals), mean, double(agg.accepted) / a.seeds,
                        median_of(agg.evals)});
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& x, const Row& y) { return x.med < y.med; });

    std::ostringstream csv;
    csv << "method,median_final_best,mean_final_best,accepted_fraction,median_evaluations\n";
    for (const auto& r : rows)
        csv << r.method << ',' << format_double(r.med) << ',' << format_double(r.mean) << ','
            << format_double(r.frac) << ',' << format_double(r.evals) << "\n";
    emit(ctx, "comparison.csv", csv.str());

    std::cout << a.seeds << " seed(s), budget " << a.budget << ", acceptance threshold "
              << format_double(a.threshold) << "\n";
    for (const auto& r : rows)
        std::cout << "  " << r.method << ": median " << format_double(r.med) << ", accepted "
                  << format_double(r.frac * 100) << "%\n";
}

void cmd_archive_inspect(Ctx& ctx, const std::string& path) {
    RunArchive a = load_archive(read_input(ctx, "archive", path));
    std::ostringstream os;
    os << "format version: " << a.format_version << "\n";
    os << "created at: " << a.created_at << "\n";
    os << "model fingerprint: " << a.model_fingerprint << "\n";
    os << "rules fingerprint: " << a.rules_fingerprint << "\n";
    os << "objective: " << to_string(a.objective.kind) << " (" << to_string(a.objective.normalization)
       << ")\n";
    os << "feature widths: pipe " << a.schema.pipe.size() << ", junction " << a.schema.junction.size()
       << ", valve " << a.schema.valve.size() << "\n";
    auto kinds = [](const std::vector<ParameterKind>& ks) {
        if (ks.empty()) return std::string("(none)");
        std::string s;
        for (auto k : ks) s += (s.empty() ? "" : " ") + std::string(to_string(k));
        return s;
    };
    os << "flow outputs: " << kinds(a.flow_kinds) << "\n";
    os << "pressure outputs: " << kinds(a.pressure_kinds) << "\n";
    auto genome_line = [&os](const char* label, const std::optional<Genome>& g) {
        os << label << " genome: ";
        if (!g) {
            os << "absent\n";
            return;
        }
        int enabled = 0;
        for (const auto& c : g->connections) enabled += c.enabled ? 1 : 0;
        os << g->nodes.size() << " nodes, " << g->connections.size() << " connections (" << enabled
           << " enabled)\n";
    };
    genome_line("flow", a.flow_genome);
    genome_line("pressure", a.pressure_genome);
    int flow_rows = 0, pressure_rows = 0;
    double flow_best = std::numeric_limits<double>::quiet_NaN();
    double pressure_best = flow_best;
    for (const auto& row : a.history) {
        if (row.phase == Phase::flow) {
            ++flow_rows;
            flow_best = row.best;
        } else {
            ++pressure_rows;
            pressure_best = row.best;
        }
    }
    os << "history: " << flow_rows << " flow generations (final best "
       << (flow_rows ? format_double(flow_best) : "n/a") << "), " << pressure_rows
       << " pressure generations (final best "
       << (pressure_rows ? format_double(pressure_best) : "n/a") << ")\n";
    os << "neat: population " << a.neat.population_size << ", max generations "
       << a.neat.max_generations << ", fitness threshold " << format_double(a.neat.fitness_threshold)
       << ", seed " << a.neat.seed << "\n";
    os << "loop: outer iterations " << a.loop_outer_iterations << ", improvement tol "
       << format_double(a.loop_improvement_tol) << "\n";
    std::cout << os.str();
    emit(ctx, "inspect.txt", os.str());
}

struct ReportArgs {
    std::string inp, calibrated, measurements, sensors, archive;
};

void cmd_report(Ctx& ctx, const ReportArgs& a) {
    NetworkModel base = load_model(ctx, "inp", a.inp);
    NetworkModel calibrated = load_model(ctx, "calibrated", a.calibrated);
    MeasurementSet measurements = parse_measurements_csv(read_input(ctx, "measurements", a.measurements));
    SensorSet sensors = parse_sensor_file(read_input(ctx, "sensors", a.sensors));

    SimulationResult before_sim = simulate_eps(base);
    SimulationResult after_sim = simulate_eps(calibrated);
    ObservationSet before = extract_observations(before_sim, sensors, true);
    ObservationSet after = extract_observations(after_sim, sensors, true);

    struct Entry {
        std::string element_kind, quantity, id, role;
        const std::map<std::string, std::vector<double>>* before;
        const std::map<std::string, std::vector<double>>* after;
        const std::map<std::string, MeasurementSeries>* meas;
    };
    std::vector<Entry> entries;
    for (const auto& id : sensors.flow_sensors)
        entries.push_back({"pipe", "flow_lps", id, "calibration", &before.flow, &after.flow,
                           &measurements.flow});
    for (const auto& id : sensors.pressure_sensors)
        entries.push_back({"junction", "pressure_m", id, "calibration", &before.pressure,
                           &after.pressure, &measurements.pressure});
    for (const auto& id : sensors.holdout_flow)
        entries.push_back({"pipe", "flow_lps", id, "validation", &before.flow, &after.flow,
                           &measurements.flow});
    for (const auto& id : sensors.holdout_pressure)
        entries.push_back({"junction", "pressure_m", id, "validation", &before.pressure,
                           &after.pressure, &measurements.pressure});

    std::ostringstream summary;
    summary << "element_kind,element_id,quantity,role,rmse_before,rmse_after\n";
    for (const auto& e : entries) {
        auto mit = e.meas->find(e.id);
        if (mit == e.meas->end())
            throw SchemaError("no measurement series for " + e.quantity + " sensor " + e.id);
        const MeasurementSeries& series = mit->second;
        const auto idx_before = match_times(before.timestamps, series.times, e.id);
        const auto idx_after = match_times(after.timestamps, series.times, e.id);
        const std::vector<double>& sim_before = e.before->at(e.id);
        const std::vector<double>& sim_after = e.after->at(e.id);

        std::ostringstream csv;
        csv << "time_s,observed,before,after\n";
        double sq_before = 0, sq_after = 0;
        for (std::size_t i = 0; i < series.times.size(); ++i) {
            const double b = sim_before[idx_before[i]];
            const double f = sim_after[idx_after[i]];
            csv << format_double(series.times[i]) << ',' << format_double(series.values[i]) << ','
                << format_double(b) << ',' << format_double(f) << "\n";
            sq_before += (b - series.values[i]) * (b - series.values[i]);
            sq_after += (f - series.values[i]) * (f - series.values[i]);
        }
        const double n = double(series.times.size());
        const std::string quantity_short = e.element_kind == "pipe" ? "flow" : "pressure";
        std::string name = "sensor_" + quantity_short + "_" + sanitize_id(e.id);
        if (e.role == "validation") name += "_validation";
        emit(ctx, name + ".csv", csv.str());
        summary << e.element_kind << ',' << e.id << ',' << e.quantity << ',' << e.role << ','
                << format_double(n ? std::sqrt(sq_before / n) : 0.0) << ','
                << format_double(n ? std::sqrt(sq_after / n) : 0.0) << "\n";
    }
    emit(ctx, "residuals.csv", summary.str());

    if (!a.archive.empty()) {
        RunArchive arch = load_archive(read_input(ctx, "archive", a.archive));
        std::ostringstream flow_csv, pressure_csv;
        flow_csv << "generation,best,mean\n";
        pressure_csv << "generation,best,mean\n";
        for (const auto& row : arch.history) {
            auto& os = row.phase == Phase::flow ? flow_csv : pressure_csv;
            os << row.generation << ',' << format_double(row.best) << ','
               << format_double(row.mean) << "\n";
        }
        emit(ctx, "convergence_flow.csv", flow_csv.str());
        emit(ctx, "convergence_pressure.csv", pressure_csv.str());
    }
    std::cout << "wrote " << entries.size() << " sensor series and residual summary\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drinking-water distribution network calibration toolkit"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = ".";
    std::string config_path;
    auto* seed_opt = app.add_option("--seed", seed, "Random seed");
    app.add_option("--threads", threads, "Evaluation thread cap (does not change results)");
    app.add_option("--out", out_dir, "Output directory (all artifacts land here)");
    app.add_option("--config", config_path, "Configuration file ([neat]/[loop] key = value lines)");

    auto sub = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
        CLI::App* s = parent->add_subcommand(name, desc);
        s->fallthrough();
        return s;
    };

    // simulate
    std::string sim_inp;
    double sim_duration = 0, sim_step = 0;
    CLI::App* simulate_cmd = sub(&app, "simulate", "Run an extended-period simulation");
    simulate_cmd->add_option("inp", sim_inp, "Network INP file")->required();
    simulate_cmd->add_option("--duration", sim_duration, "Horizon in seconds (default: [TIMES])");
    simulate_cmd->add_option("--step", sim_step, "Hydraulic step in seconds (default: [TIMES])");

    // validate
    std::string val_inp;
    CLI::App* validate_cmd = sub(&app, "validate", "Validate a network INP file");
    validate_cmd->add_option("inp", val_inp, "Network INP file")->required();

    // synth
    SynthSpec synth_spec;
    CLI::App* synth_cmd = sub(&app, "synth", "Generate a synthetic calibration benchmark");
    synth_cmd->add_option("--profile", synth_spec.profile, "fossolo-like or scaled");
    synth_cmd->add_option("--junctions", synth_spec.junctions, "Junction count (scaled profile)");
    synth_cmd->add_option("--noise-sigma", synth_spec.noise_sigma, "Gaussian measurement noise");
    synth_cmd->add_option("--demand-perturbation", synth_spec.demand_perturbation,
                          "Truth demand multiplier half-range");
    synth_cmd->add_option("--roughness-perturbation", synth_spec.roughness_perturbation,
                          "Truth roughness multiplier half-range");
    synth_cmd->add_option("--pressure-floor", synth_spec.pressure_floor_m,
                          "Minimum junction pressure after demand scaling; <= 0 skips scaling");
    synth_cmd->add_option("--flow-sensors", synth_spec.flow_sensors,
                          "Calibration flow meter count (one more is held out)");
    synth_cmd->add_option("--pressure-sensors", synth_spec.pressure_sensors,
                          "Calibration pressure gauge count (one more is held out)");

    // rules check
    std::string rules_inp, rules_file;
    CLI::App* rules_cmd = sub(&app, "rules", "Expert rule operations");
    rules_cmd->require_subcommand(1);
    CLI::App* rules_check_cmd = sub(rules_cmd, "check", "Compile rules against a network");
    rules_check_cmd->add_option("inp", rules_inp, "Network INP file")->required();
    rules_check_cmd->add_option("rules", rules_file, "Rule file")->required();

    // calibrate
    CalibrateArgs cal;
    int cal_population = 0, cal_generations = -1, cal_outer = 0;
    double cal_fitness_threshold = 0, cal_improvement_tol = 0;
    std::string cal_objective, cal_normalization;
    CLI::App* calibrate_cmd = sub(&app, "calibrate", "Run ES-NEAT calibration");
    calibrate_cmd->add_option("--inp", cal.inp, "Network INP file")->required();
    calibrate_cmd->add_option("--rules", cal.rules, "Expert rule file")->required();
    calibrate_cmd->add_option("--measurements", cal.measurements, "Measurement CSV")->required();
    calibrate_cmd->add_option("--sensors", cal.sensors, "Sensor declaration file")->required();
    calibrate_cmd->add_option("--seed-archive", cal.seed_archive,
                              "Archive from a previous campaign to seed from");
    calibrate_cmd->add_flag("--seed-optional", cal.seed_optional,
                            "Cold start instead of failing on an incompatible seed archive");
    calibrate_cmd->add_option("--stamp", cal.stamp,
                              "Archive timestamp override (default: SOURCE_DATE_EPOCH or epoch)");
    auto* cal_pop_opt = calibrate_cmd->add_option("--population", cal_population, "NEAT population size");
    auto* cal_gen_opt =
        calibrate_cmd->add_option("--generations", cal_generations,
                                  "Max generations per phase; 0 evaluates generation 0 only");
    auto* cal_thr_opt = calibrate_cmd->add_option("--fitness-threshold", cal_fitness_threshold,
                                                  "Stop once the phase objective falls below this");
    auto* cal_outer_opt =
        calibrate_cmd->add_option("--outer-iterations", cal_outer, "Flow/pressure passes");
    auto* cal_tol_opt = calibrate_cmd->add_option("--improvement-tol", cal_improvement_tol,
                                                  "Relative improvement needed to keep iterating");
    auto* cal_obj_opt =
        calibrate_cmd->add_option("--objective", cal_objective, "rmse, mae, or nse");
    auto* cal_norm_opt = calibrate_cmd->add_option("--normalization", cal_normalization,
                                                   "raw or per_sensor_std");

    // compare
    CompareArgs cmp;
    CLI::App* compare_cmd = sub(&app, "compare", "Benchmark optimizers under a shared budget");
    compare_cmd->add_option("--inp", cmp.inp, "Network INP file")->required();
    compare_cmd->add_option("--rules", cmp.rules, "Expert rule file")->required();
    compare_cmd->add_option("--measurements", cmp.measurements, "Measurement CSV")->required();
    compare_cmd->add_option("--sensors", cmp.sensors, "Sensor declaration file")->required();
    compare_cmd->add_option("--methods", cmp.methods, "Comma list: mc,lhs,sa,pso,sceua,ga,es-neat");
    compare_cmd->add_option("--budget", cmp.budget, "Objective evaluations per method");
    compare_cmd->add_option("--seeds", cmp.seeds, "Independent repetitions (seed, seed+1, ...)");
    compare_cmd->add_option("--threshold", cmp.threshold, "Acceptance threshold on final best");
    compare_cmd->add_option("--objective", cmp.objective, "rmse, mae, or nse");
    compare_cmd->add_option("--normalization", cmp.normalization, "raw or per_sensor_std");

    // archive inspect
    std::string arch_path;
    CLI::App* archive_cmd = sub(&app, "archive", "Genome archive operations");
    archive_cmd->require_subcommand(1);
    CLI::App* archive_inspect_cmd = sub(archive_cmd, "inspect", "Summarize an archive file");
    archive_inspect_cmd->add_option("archive", arch_path, "Archive file")->required();

    // report
    ReportArgs rep;
    CLI::App* report_cmd = sub(&app, "report", "Emit before/after plot data for a calibration run");
    report_cmd->add_option("--inp", rep.inp, "Network INP file before calibration")->required();
    report_cmd->add_option("--calibrated", rep.calibrated, "Calibrated INP file")->required();
    report_cmd->add_option("--measurements", rep.measurements, "Measurement CSV")->required();
    report_cmd->add_option("--sensors", rep.sensors, "Sensor declaration file")->required();
    report_cmd->add_option("--archive", rep.archive, "Run archive (adds convergence curves)");

    // config dump
    CLI::App* config_cmd = sub(&app, "config", "Configuration operations");
    config_cmd->require_subcommand(1);
    CLI::App* config_dump_cmd = sub(config_cmd, "dump", "Print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    Ctx ctx;
    ctx.argv.assign(argv + 1, argv + argc);
    ctx.out = out_dir;
    ctx.seed = seed;
    ctx.threads = threads;
    ctx.start_time = now_iso();
    const bool seed_given = seed_opt->count() > 0;

    // Defaults < config file < flags; every applied override is recorded in
    // the manifest.
    auto merged_config = [&](CLI::App* cmd) {
        ToolConfig cfg;
        if (!config_path.empty()) {
            ctx.inputs["config"] = config_path;
            apply_config_file(cfg, read_file(config_path), ctx.overrides);
        }
        auto record = [&](const std::string& key, const std::string& value) {
            ctx.overrides[key] = value;
        };
        if (cmd == calibrate_cmd) {
            if (cal_pop_opt->count()) {
                cfg.neat.population_size = cal_population;
                record("neat.population_size", std::to_string(cal_population));
            }
            if (cal_gen_opt->count()) {
                cfg.neat.max_generations = cal_generations;
                record("neat.max_generations", std::to_string(cal_generations));
            }
            if (cal_thr_opt->count()) {
                cfg.neat.fitness_threshold = cal_fitness_threshold;
                record("neat.fitness_threshold", format_double(cal_fitness_threshold));
            }
            if (cal_outer_opt->count()) {
                cfg.loop.outer_iterations = cal_outer;
                record("loop.outer_iterations", std::to_string(cal_outer));
            }
            if (cal_tol_opt->count()) {
                cfg.loop.improvement_tol = cal_improvement_tol;
                record("loop.improvement_tol", format_double(cal_improvement_tol));
            }
            if (cal_obj_opt->count()) {
                cfg.loop.objective.kind = objective_kind_from_string(cal_objective);
                record("loop.objective", cal_objective);
            }
            if (cal_norm_opt->count()) {
                cfg.loop.objective.normalization = normalization_from_string(cal_normalization);
                record("loop.normalization", cal_normalization);
            }
        }
        if (seed_given) {
            cfg.neat.seed = seed;
            record("neat.seed", std::to_string(seed));
        }
        cfg.loop.threads = threads;
        return cfg;
    };

    if (simulate_cmd->parsed()) {
        ctx.command = "simulate";
        return run_command(ctx, [&] { cmd_simulate(ctx, sim_inp, sim_duration, sim_step); });
    }
    if (validate_cmd->parsed()) {
        ctx.command = "validate";
        return run_command(ctx, [&] { cmd_validate(ctx, val_inp); });
    }
    if (synth_cmd->parsed()) {
        ctx.command = "synth";
        if (seed_given) synth_spec.seed = seed;
        ctx.seed = synth_spec.seed;
        return run_command(ctx, [&] { cmd_synth(ctx, synth_spec); });
    }
    if (rules_cmd->parsed() && rules_check_cmd->parsed()) {
        ctx.command = "rules check";
        return run_command(ctx, [&] { cmd_rules_check(ctx, rules_inp, rules_file); });
    }
    if (calibrate_cmd->parsed()) {
        ctx.command = "calibrate";
        return run_command(ctx, [&] { cmd_calibrate(ctx, cal, merged_config(calibrate_cmd)); });
    }
    if (compare_cmd->parsed()) {
        ctx.command = "compare";
        return run_command(ctx, [&] { cmd_compare(ctx, cmp, merged_config(compare_cmd)); });
    }
    if (archive_cmd->parsed() && archive_inspect_cmd->parsed()) {
        ctx.command = "archive inspect";
        return run_command(ctx, [&] { cmd_archive_inspect(ctx, arch_path); });
    }
    if (report_cmd->parsed()) {
        ctx.command = "report";
        return run_command(ctx, [&] { cmd_report(ctx, rep); });
    }
    if (config_cmd->parsed() && config_dump_cmd->parsed()) {
        ctx.command = "config dump";
        return run_command(ctx, [&] { std::cout << dump_config(merged_config(config_dump_cmd)); });
    }
    std::cerr << "error: no command selected\n";
    return kExitUsage;
}
