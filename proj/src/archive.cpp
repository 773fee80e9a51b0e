#include "aquacal/archive.hpp"

#include <algorithm>
#include <map>

#include "aquacal/common.hpp"
#include "aquacal/inp.hpp"

namespace aquacal {

namespace {

std::string kinds_line(const char* group, const std::vector<ParameterKind>& kinds) {
    std::string out = group;
    for (ParameterKind k : kinds) {
        out += ' ';
        out += to_string(k);
    }
    out += '\n';
    return out;
}

std::string kind_list(const std::vector<ParameterKind>& kinds) {
    std::string out = "[";
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (i) out += ' ';
        out += to_string(kinds[i]);
    }
    return out + "]";
}

// Genomes are emitted with nodes sorted by id and connections by innovation
// so that save -> load -> save is byte-stable regardless of gene order.
Genome canonical(const Genome& g) {
    Genome c = g;
    std::sort(c.nodes.begin(), c.nodes.end(),
              [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
    std::sort(c.connections.begin(), c.connections.end(),
              [](const ConnectionGene& a, const ConnectionGene& b) {
                  return a.innovation < b.innovation;
              });
    return c;
}

struct Scanner {
    std::string_view text;
    std::size_t pos = 0;        // start of the next line
    std::size_t line_start = 0; // start of the line most recently returned
    int lineno = 0;

    bool next(std::string_view& out) {
        if (pos > text.size()) return false;
        line_start = pos;
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            out = text.substr(pos);
            pos = text.size() + 1;
        } else {
            out = text.substr(pos, eol - pos);
            pos = eol + 1;
        }
        ++lineno;
        return true;
    }
};

[[noreturn]] void corrupt(const Scanner& sc, std::size_t offset, const std::string& what) {
    throw ParseError(sc.lineno, 1, "corrupt archive at byte " + std::to_string(offset) +
                                       ": " + what);
}

double require_double(const Scanner& sc, const std::string& value, const char* what) {
    auto v = parse_double(value);
    if (!v) corrupt(sc, sc.line_start, std::string("bad ") + what + " '" + value + "'");
    return *v;
}

long require_long(const Scanner& sc, const std::string& value, const char* what) {
    auto v = parse_long(value);
    if (!v) corrupt(sc, sc.line_start, std::string("bad ") + what + " '" + value + "'");
    return *v;
}

} // namespace

std::string model_fingerprint(const NetworkModel& model) {
    return fingerprint_hex(write_inp(model));
}

std::string text_fingerprint(std::string_view text) { return fingerprint_hex(text); }

RunArchive make_archive(const CalibrationRun& run, const ArchiveContext& context) {
    RunArchive a;
    a.created_at = context.created_at;
    a.model_fingerprint = context.model_fingerprint;
    a.rules_fingerprint = context.rules_fingerprint;
    a.objective = context.objective;
    a.schema = context.schema;
    a.flow_kinds = context.flow_kinds;
    a.pressure_kinds = context.pressure_kinds;
    a.flow_genome = run.flow_genome;
    a.pressure_genome = run.pressure_genome;
    a.neat = context.neat;
    a.loop_outer_iterations = context.loop.outer_iterations;
    a.loop_improvement_tol = context.loop.improvement_tol;

    auto flatten = [&](Phase phase, const std::vector<std::vector<double>>& best,
                       const std::vector<std::vector<double>>& mean) {
        int gen = 0;
        for (std::size_t i = 0; i < best.size(); ++i)
            for (std::size_t j = 0; j < best[i].size(); ++j) {
                double m = (i < mean.size() && j < mean[i].size()) ? mean[i][j] : best[i][j];
                a.history.push_back({phase, gen++, best[i][j], m});
            }
    };
    flatten(Phase::flow, run.flow_history, run.flow_mean_history);
    flatten(Phase::pressure, run.pressure_history, run.pressure_mean_history);
    return a;
}

std::string save_archive(const RunArchive& archive) {
    std::string out = "AQUACAL-ARCHIVE v" + std::to_string(archive.format_version) + "\n";
    const std::string schema_text = archive.schema.serialize();

    out += "[meta]\n";
    out += "format_version=" + std::to_string(archive.format_version) + "\n";
    out += "created_at=" + archive.created_at + "\n";
    out += "model_fingerprint=" + archive.model_fingerprint + "\n";
    out += "rules_fingerprint=" + archive.rules_fingerprint + "\n";
    out += "schema_fingerprint=" + fingerprint_hex(schema_text) + "\n";
    out += std::string("objective=") + to_string(archive.objective.kind) + "\n";
    out += std::string("normalization=") + to_string(archive.objective.normalization) + "\n";

    out += "[schema]\n";
    out += schema_text;

    out += "[groups]\n";
    out += kinds_line("flow", archive.flow_kinds);
    out += kinds_line("pressure", archive.pressure_kinds);

    if (archive.flow_genome) {
        out += "[genome flow]\n";
        out += serialize_genome(canonical(*archive.flow_genome));
    }
    if (archive.pressure_genome) {
        out += "[genome pressure]\n";
        out += serialize_genome(canonical(*archive.pressure_genome));
    }

    out += "[history]\n";
    for (const auto& row : archive.history) {
        out += to_string(row.phase);
        out += ' ' + std::to_string(row.generation);
        out += ' ' + format_double(row.best);
        out += ' ' + format_double(row.mean);
        out += '\n';
    }

    out += "[config]\n";
    out += "population_size=" + std::to_string(archive.neat.population_size) + "\n";
    out += "max_generations=" + std::to_string(archive.neat.max_generations) + "\n";
    out += "fitness_threshold=" + format_double(archive.neat.fitness_threshold) + "\n";
    out += "add_connection_rate=" + format_double(archive.neat.add_connection_rate) + "\n";
    out += "add_node_rate=" + format_double(archive.neat.add_node_rate) + "\n";
    out += "remove_connection_rate=" + format_double(archive.neat.remove_connection_rate) +
           "\n";
    out += "remove_node_rate=" + format_double(archive.neat.remove_node_rate) + "\n";
    out += "weight_perturb_rate=" + format_double(archive.neat.weight_perturb_rate) + "\n";
    out += "weight_perturb_sigma=" + format_double(archive.neat.weight_perturb_sigma) + "\n";
    out += "weight_replace_rate=" + format_double(archive.neat.weight_replace_rate) + "\n";
    out += "c1=" + format_double(archive.neat.c1) + "\n";
    out += "c2=" + format_double(archive.neat.c2) + "\n";
    out += "c3=" + format_double(archive.neat.c3) + "\n";
    out += "compatibility_threshold=" + format_double(archive.neat.compatibility_threshold) +
           "\n";
    out += "stagnation_limit=" + std::to_string(archive.neat.stagnation_limit) + "\n";
    out += "elitism=" + std::to_string(archive.neat.elitism) + "\n";
    out += "survival_fraction=" + format_double(archive.neat.survival_fraction) + "\n";
    out += "seed=" + std::to_string(archive.neat.seed) + "\n";
    out += "outer_iterations=" + std::to_string(archive.loop_outer_iterations) + "\n";
    out += "improvement_tol=" + format_double(archive.loop_improvement_tol) + "\n";
    return out;
}

RunArchive load_archive(std::string_view document) {
    Scanner sc{document};
    std::string_view line;
    if (!sc.next(line) || trim(line).empty())
        corrupt(sc, 0, "missing 'AQUACAL-ARCHIVE v" + std::to_string(kArchiveVersion) +
                           "' header");
    {
        auto toks = split_ws(trim(line));
        if (toks.size() != 2 || toks[0] != "AQUACAL-ARCHIVE" || toks[1].empty() ||
            toks[1][0] != 'v')
            corrupt(sc, 0, "missing 'AQUACAL-ARCHIVE v" + std::to_string(kArchiveVersion) +
                               "' header");
        const std::string ver = toks[1].substr(1);
        if (ver != std::to_string(kArchiveVersion))
            throw SchemaError("archive format version " + ver +
                              " is not supported; this build reads version " +
                              std::to_string(kArchiveVersion));
    }

    RunArchive a;
    a.flow_kinds.clear();
    a.pressure_kinds.clear();
    std::map<std::string, std::string> meta;
    std::string schema_text, flow_text, pressure_text;
    bool seen_schema = false, seen_groups = false, seen_config = false, seen_history = false;
    bool have_flow_kinds = false, have_pressure_kinds = false;
    std::map<std::string, std::string> config;
    std::string section;

    while (sc.next(line)) {
        std::string t(trim(line));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                corrupt(sc, sc.line_start, "unterminated section header '" + t + "'");
            section = t.substr(1, t.size() - 2);
            if (section == "schema") seen_schema = true;
            else if (section == "groups") seen_groups = true;
            else if (section == "config") seen_config = true;
            else if (section == "history") seen_history = true;
            else if (section != "meta" && section != "genome flow" &&
                     section != "genome pressure")
                corrupt(sc, sc.line_start, "unknown section '" + section + "'");
            continue;
        }
        if (section == "meta" || section == "config") {
            auto eq = t.find('=');
            if (eq == std::string::npos)
                corrupt(sc, sc.line_start, "expected key=value, got '" + t + "'");
            auto& dest = (section == "meta") ? meta : config;
            dest[t.substr(0, eq)] = t.substr(eq + 1);
        } else if (section == "schema") {
            schema_text += t;
            schema_text += '\n';
        } else if (section == "groups") {
            auto toks = split_ws(t);
            std::vector<ParameterKind> kinds;
            for (std::size_t i = 1; i < toks.size(); ++i) {
                try {
                    kinds.push_back(parameter_kind_from_string(toks[i]));
                } catch (const SchemaError& e) {
                    corrupt(sc, sc.line_start, e.what());
                }
            }
            if (toks[0] == "flow") {
                a.flow_kinds = kinds;
                have_flow_kinds = true;
            } else if (toks[0] == "pressure") {
                a.pressure_kinds = kinds;
                have_pressure_kinds = true;
            } else {
                corrupt(sc, sc.line_start, "unknown group '" + toks[0] + "'");
            }
        } else if (section == "genome flow") {
            flow_text += t;
            flow_text += '\n';
        } else if (section == "genome pressure") {
            pressure_text += t;
            pressure_text += '\n';
        } else if (section == "history") {
            auto toks = split_ws(t);
            if (toks.size() != 4)
                corrupt(sc, sc.line_start,
                        "expected '<phase> <generation> <best> <mean>', got '" + t + "'");
            RunArchive::HistoryRow row;
            if (toks[0] == "flow") row.phase = Phase::flow;
            else if (toks[0] == "pressure") row.phase = Phase::pressure;
            else corrupt(sc, sc.line_start, "unknown phase '" + toks[0] + "'");
            row.generation = int(require_long(sc, toks[1], "generation"));
            row.best = require_double(sc, toks[2], "best fitness");
            row.mean = require_double(sc, toks[3], "mean fitness");
            a.history.push_back(row);
        } else {
            corrupt(sc, sc.line_start, "content before the first section header");
        }
    }

    const std::size_t end = document.size();
    if (!seen_schema) corrupt(sc, end, "truncated: missing [schema] section");
    if (!seen_groups || !have_flow_kinds || !have_pressure_kinds)
        corrupt(sc, end, "truncated: missing [groups] section");
    if (!seen_history) corrupt(sc, end, "truncated: missing [history] section");
    if (!seen_config) corrupt(sc, end, "truncated: missing [config] section");
    for (const char* key : {"format_version", "created_at", "model_fingerprint",
                            "rules_fingerprint", "schema_fingerprint", "objective",
                            "normalization"})
        if (!meta.count(key)) corrupt(sc, end, std::string("missing meta key '") + key + "'");

    a.format_version = int(require_long(sc, meta["format_version"], "format_version"));
    if (a.format_version != kArchiveVersion)
        throw SchemaError("archive format version " + meta["format_version"] +
                          " is not supported; this build reads version " +
                          std::to_string(kArchiveVersion));
    a.created_at = meta["created_at"];
    a.model_fingerprint = meta["model_fingerprint"];
    a.rules_fingerprint = meta["rules_fingerprint"];
    a.objective.kind = objective_kind_from_string(meta["objective"]);
    a.objective.normalization = normalization_from_string(meta["normalization"]);

    a.schema = parse_feature_schema(schema_text);
    if (fingerprint_hex(a.schema.serialize()) != meta["schema_fingerprint"])
        throw SchemaError("schema fingerprint mismatch: stored " + meta["schema_fingerprint"] +
                          ", recomputed " + fingerprint_hex(a.schema.serialize()));

    if (!flow_text.empty()) a.flow_genome = parse_genome(flow_text);
    if (!pressure_text.empty()) a.pressure_genome = parse_genome(pressure_text);

    auto config_double = [&](const char* key, double& out) {
        auto it = config.find(key);
        if (it == config.end()) corrupt(sc, end, std::string("missing config key '") + key + "'");
        out = require_double(sc, it->second, key);
    };
    auto config_int = [&](const char* key, int& out) {
        auto it = config.find(key);
        if (it == config.end()) corrupt(sc, end, std::string("missing config key '") + key + "'");
        out = int(require_long(sc, it->second, key));
    };
    config_int("population_size", a.neat.population_size);
    config_int("max_generations", a.neat.max_generations);
    config_double("fitness_threshold", a.neat.fitness_threshold);
    config_double("add_connection_rate", a.neat.add_connection_rate);
    config_double("add_node_rate", a.neat.add_node_rate);
    config_double("remove_connection_rate", a.neat.remove_connection_rate);
    config_double("remove_node_rate", a.neat.remove_node_rate);
    config_double("weight_perturb_rate", a.neat.weight_perturb_rate);
    config_double("weight_perturb_sigma", a.neat.weight_perturb_sigma);
    config_double("weight_replace_rate", a.neat.weight_replace_rate);
    config_double("c1", a.neat.c1);
    config_double("c2", a.neat.c2);
    config_double("c3", a.neat.c3);
    config_double("compatibility_threshold", a.neat.compatibility_threshold);
    config_int("stagnation_limit", a.neat.stagnation_limit);
    config_int("elitism", a.neat.elitism);
    config_double("survival_fraction", a.neat.survival_fraction);
    {
        auto it = config.find("seed");
        if (it == config.end()) corrupt(sc, end, "missing config key 'seed'");
        try {
            a.neat.seed = std::stoull(it->second);
        } catch (const std::exception&) {
            corrupt(sc, end, "bad seed '" + it->second + "'");
        }
    }
    config_int("outer_iterations", a.loop_outer_iterations);
    config_double("improvement_tol", a.loop_improvement_tol);
    return a;
}

SeedResult seed_calibration(const RunArchive& archive, const NetworkModel& new_model,
                            const ParameterSpace& new_space) {
    SeedResult res;
    const FeatureSchema current = build_features(new_model).schema;

    auto layout_matches = [&](const char* kind, const std::vector<FeatureDef>& archived,
                              const std::vector<FeatureDef>& now) {
        auto names = [](const std::vector<FeatureDef>& defs) {
            std::string s;
            for (const auto& d : defs) {
                if (!s.empty()) s += ' ';
                s += d.name;
            }
            return s;
        };
        if (archived.size() != now.size() ||
            !std::equal(archived.begin(), archived.end(), now.begin(),
                        [](const FeatureDef& a, const FeatureDef& b) {
                            return a.name == b.name;
                        })) {
            res.mismatches.push_back(std::string(kind) + " feature layout differs: archived [" +
                                     names(archived) + "] vs current [" + names(now) + "]");
            return false;
        }
        return true;
    };
    layout_matches("pipe", archive.schema.pipe, current.pipe);
    layout_matches("junction", archive.schema.junction, current.junction);
    layout_matches("valve", archive.schema.valve, current.valve);

    auto [flow_specs, pressure_specs] = group_parameters(new_space);
    const auto flow_now = output_kinds(flow_specs);
    const auto pressure_now = output_kinds(pressure_specs);
    if (flow_now != archive.flow_kinds)
        res.mismatches.push_back("flow output kinds differ: archived " +
                                 kind_list(archive.flow_kinds) + " vs current " +
                                 kind_list(flow_now));
    if (pressure_now != archive.pressure_kinds)
        res.mismatches.push_back("pressure output kinds differ: archived " +
                                 kind_list(archive.pressure_kinds) + " vs current " +
                                 kind_list(pressure_now));

    if (!res.mismatches.empty()) return res;

    const std::string fp = model_fingerprint(new_model);
    if (!archive.model_fingerprint.empty() && fp != archive.model_fingerprint)
        res.warnings.push_back("model fingerprint changed (archived " +
                               archive.model_fingerprint + ", current " + fp +
                               "); seeding across network revisions");
    res.flow = archive.flow_genome;
    res.pressure = archive.pressure_genome;
    return res;
}

} // namespace aquacal
