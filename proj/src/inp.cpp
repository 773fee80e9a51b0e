#include "aquacal/inp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace aquacal {

namespace {

enum class Section {
    none, title, junctions, reservoirs, pipes, valves, demands,
    patterns, emitters, options, times, coordinates, tags, end
};

const std::unordered_map<std::string, Section> kSupportedSections = {
    {"title", Section::title},       {"junctions", Section::junctions},
    {"reservoirs", Section::reservoirs}, {"pipes", Section::pipes},
    {"valves", Section::valves},     {"demands", Section::demands},
    {"patterns", Section::patterns}, {"emitters", Section::emitters},
    {"options", Section::options},   {"times", Section::times},
    {"coordinates", Section::coordinates}, {"tags", Section::tags},
    {"end", Section::end},
};

// Standard EPANET sections outside the supported subset; reported, not parsed.
const std::unordered_set<std::string> kKnownSkipped = {
    "tanks", "pumps", "controls", "rules", "sources", "curves", "quality",
    "status", "roughness", "energy", "reactions", "mixing", "report",
    "vertices", "labels", "backdrop",
};

struct Row {
    int line;
    std::vector<std::string> tokens;
};

double need_number(const Row& row, size_t idx, const char* what) {
    if (idx >= row.tokens.size())
        throw ParseError(row.line, 1, std::string("missing ") + what);
    auto v = parse_double(row.tokens[idx]);
    if (!v)
        throw ParseError(row.line, 1,
                         std::string("expected a number for ") + what + ", got '" +
                             row.tokens[idx] + "'");
    return *v;
}

// Accepts "H:MM[:SS]", a decimal value with an optional unit token
// (seconds/minutes/hours/days), or a bare decimal meaning hours.
double parse_time_seconds(const Row& row, size_t idx) {
    if (idx >= row.tokens.size())
        throw ParseError(row.line, 1, "missing time value");
    const std::string& tok = row.tokens[idx];
    auto colon = tok.find(':');
    if (colon != std::string::npos) {
        auto h = parse_long(tok.substr(0, colon));
        std::string rest = tok.substr(colon + 1);
        auto colon2 = rest.find(':');
        long sec = 0;
        if (colon2 != std::string::npos) {
            auto s = parse_long(rest.substr(colon2 + 1));
            if (!s) throw ParseError(row.line, 1, "bad clock time '" + tok + "'");
            sec = *s;
            rest = rest.substr(0, colon2);
        }
        auto m = parse_long(rest);
        if (!h || !m) throw ParseError(row.line, 1, "bad clock time '" + tok + "'");
        return double(*h) * 3600.0 + double(*m) * 60.0 + double(sec);
    }
    auto v = parse_double(tok);
    if (!v) throw ParseError(row.line, 1, "bad time value '" + tok + "'");
    double scale = 3600.0; // default unit is hours
    if (idx + 1 < row.tokens.size()) {
        std::string unit = lower(row.tokens[idx + 1]);
        if (unit == "seconds" || unit == "sec" || unit == "s")
            scale = 1.0;
        else if (unit == "minutes" || unit == "min" || unit == "m")
            scale = 60.0;
        else if (unit == "hours" || unit == "hr" || unit == "h")
            scale = 3600.0;
        else if (unit == "days" || unit == "day" || unit == "d")
            scale = 86400.0;
        else
            throw ParseError(row.line, 1, "unknown time unit '" + row.tokens[idx + 1] + "'");
    }
    return *v * scale;
}

LinkStatus parse_status(const Row& row, size_t idx, LinkStatus fallback) {
    if (idx >= row.tokens.size()) return fallback;
    std::string s = lower(row.tokens[idx]);
    if (s == "open") return LinkStatus::open;
    if (s == "closed") return LinkStatus::closed;
    throw ParseError(row.line, 1, "expected Open or Closed, got '" + row.tokens[idx] + "'");
}

} // namespace

InpParseResult parse_inp(std::string_view text) {
    InpParseResult result;
    NetworkModel& model = result.model;
    bool units_seen = false;

    Section section = Section::none;
    std::unordered_set<std::string> node_ids, link_ids;
    std::vector<std::pair<std::string, int>> endpoint_refs; // node id -> line of use
    std::vector<Row> demand_rows, emitter_rows, tag_rows;
    std::vector<std::string> title_lines;

    int lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view raw = (eol == std::string_view::npos)
                                   ? text.substr(pos)
                                   : text.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++lineno;

        std::string_view line = raw;
        if (auto sc = line.find(';'); sc != std::string_view::npos)
            line = line.substr(0, sc);
        std::string_view trimmed = trim(line);
        if (trimmed.empty()) continue;

        if (trimmed.front() == '[') {
            auto close = trimmed.find(']');
            if (close == std::string_view::npos)
                throw ParseError(lineno, 1, "unterminated section header");
            std::string name = lower(trim(trimmed.substr(1, close - 1)));
            auto it = kSupportedSections.find(name);
            if (it != kSupportedSections.end()) {
                section = it->second;
                if (section == Section::end) break;
            } else if (kKnownSkipped.count(name)) {
                result.diagnostics.push_back(
                    {Severity::warning, "[" + name + "]",
                     "section is outside the supported subset and was skipped"});
                section = Section::none; // rows ignored until the next header
            } else {
                throw ParseError(lineno, 1, "unknown section token '[" + name + "]'");
            }
            continue;
        }

        if (section == Section::title) {
            title_lines.emplace_back(trim(raw));
            continue;
        }

        Row row{lineno, split_ws(trimmed)};
        switch (section) {
            case Section::none:
                // Content before any supported header (or inside a skipped
                // section); skipped-section rows are silently dropped, but
                // text before the first header is a syntax error.
                if (result.diagnostics.empty() && model.junctions.empty() &&
                    model.reservoirs.empty() && title_lines.empty())
                    throw ParseError(lineno, 1, "content before first section header");
                break;
            case Section::junctions: {
                Junction j;
                j.id = row.tokens.at(0);
                if (!node_ids.insert(j.id).second)
                    throw ParseError(row.line, 1, "duplicate node id '" + j.id + "'");
                j.elevation_m = need_number(row, 1, "elevation");
                if (row.tokens.size() > 2) j.base_demand_lps = need_number(row, 2, "demand");
                if (row.tokens.size() > 3) j.pattern_id = row.tokens[3];
                model.junctions.push_back(std::move(j));
                break;
            }
            case Section::reservoirs: {
                Reservoir r;
                r.id = row.tokens.at(0);
                if (!node_ids.insert(r.id).second)
                    throw ParseError(row.line, 1, "duplicate node id '" + r.id + "'");
                r.head_m = need_number(row, 1, "head");
                if (row.tokens.size() > 2) r.head_pattern = row.tokens[2];
                model.reservoirs.push_back(std::move(r));
                break;
            }
            case Section::pipes: {
                if (row.tokens.size() < 6)
                    throw ParseError(row.line, 1, "pipe row needs id, nodes, length, diameter, roughness");
                Pipe p;
                p.id = row.tokens[0];
                if (!link_ids.insert(p.id).second)
                    throw ParseError(row.line, 1, "duplicate link id '" + p.id + "'");
                p.from = row.tokens[1];
                p.to = row.tokens[2];
                endpoint_refs.push_back({p.from, row.line});
                endpoint_refs.push_back({p.to, row.line});
                p.length_m = need_number(row, 3, "length");
                p.diameter_mm = need_number(row, 4, "diameter");
                p.roughness = need_number(row, 5, "roughness");
                if (row.tokens.size() > 6) p.minor_loss_k = need_number(row, 6, "minor loss");
                p.status = parse_status(row, 7, LinkStatus::open);
                model.pipes.push_back(std::move(p));
                break;
            }
            case Section::valves: {
                if (row.tokens.size() < 6)
                    throw ParseError(row.line, 1, "valve row needs id, nodes, diameter, kind, loss coefficient");
                Valve v;
                v.id = row.tokens[0];
                if (!link_ids.insert(v.id).second)
                    throw ParseError(row.line, 1, "duplicate link id '" + v.id + "'");
                v.from = row.tokens[1];
                v.to = row.tokens[2];
                endpoint_refs.push_back({v.from, row.line});
                endpoint_refs.push_back({v.to, row.line});
                v.diameter_mm = need_number(row, 3, "diameter");
                v.kind = row.tokens[4];
                v.loss_coeff_k = need_number(row, 5, "loss coefficient");
                v.status = parse_status(row, 6, LinkStatus::open);
                model.valves.push_back(std::move(v));
                break;
            }
            case Section::demands:
            case Section::emitters:
            case Section::tags:
                // Resolved after all elements exist.
                (section == Section::demands
                     ? demand_rows
                     : section == Section::emitters ? emitter_rows : tag_rows)
                    .push_back(std::move(row));
                break;
            case Section::patterns: {
                if (row.tokens.size() < 2)
                    throw ParseError(row.line, 1, "pattern row needs an id and multipliers");
                auto& mults = model.patterns[row.tokens[0]];
                for (size_t i = 1; i < row.tokens.size(); ++i)
                    mults.push_back(need_number(row, i, "pattern multiplier"));
                break;
            }
            case Section::options: {
                std::string key = lower(row.tokens.at(0));
                if (key == "units") {
                    if (row.tokens.size() < 2 || lower(row.tokens[1]) != "lps")
                        throw ParseError(row.line, 1,
                                         "only LPS units are supported (got '" +
                                             (row.tokens.size() > 1 ? row.tokens[1] : "") + "')");
                    units_seen = true;
                } else if (key == "headloss") {
                    if (row.tokens.size() < 2)
                        throw ParseError(row.line, 1, "missing headloss formula");
                    std::string f = lower(row.tokens[1]);
                    if (f == "d-w" || f == "darcy-weisbach")
                        model.options.headloss = HeadlossFormula::darcy_weisbach;
                    else if (f == "h-w" || f == "hazen-williams")
                        model.options.headloss = HeadlossFormula::hazen_williams;
                    else
                        throw ParseError(row.line, 1, "unknown headloss formula '" + row.tokens[1] + "'");
                } else if (key == "emitter" && row.tokens.size() > 1 &&
                           lower(row.tokens[1]) == "exponent") {
                    model.options.emitter_exponent = need_number(row, 2, "emitter exponent");
                } else {
                    result.diagnostics.push_back(
                        {Severity::warning, row.tokens[0], "option ignored"});
                }
                break;
            }
            case Section::times: {
                std::string key = lower(row.tokens.at(0));
                if (key == "duration") {
                    model.options.duration_s = parse_time_seconds(row, 1);
                } else if (key == "hydraulic" && row.tokens.size() > 1 &&
                           lower(row.tokens[1]) == "timestep") {
                    model.options.hydraulic_step_s = parse_time_seconds(row, 2);
                } else if (key == "pattern" && row.tokens.size() > 1 &&
                           lower(row.tokens[1]) == "timestep") {
                    model.options.pattern_step_s = parse_time_seconds(row, 2);
                } else {
                    result.diagnostics.push_back(
                        {Severity::warning, row.tokens[0], "time setting ignored"});
                }
                break;
            }
            case Section::coordinates: {
                if (row.tokens.size() < 3)
                    throw ParseError(row.line, 1, "coordinate row needs node, x, y");
                model.coordinates[row.tokens[0]] = {need_number(row, 1, "x"),
                                                    need_number(row, 2, "y")};
                break;
            }
            case Section::title:
            case Section::end:
                break;
        }
    }

    model.title.clear();
    for (size_t i = 0; i < title_lines.size(); ++i) {
        if (i) model.title += '\n';
        model.title += title_lines[i];
    }

    // Endpoint references must resolve to parsed nodes.
    for (const auto& [node, line] : endpoint_refs)
        if (!node_ids.count(node))
            throw ParseError(line, 1, "link endpoint references unknown node '" + node + "'");

    auto junction_for = [&](const Row& row, const std::string& id) -> Junction& {
        for (auto& j : model.junctions)
            if (j.id == id) return j;
        throw ParseError(row.line, 1, "unknown junction '" + id + "'");
    };

    for (const auto& row : demand_rows) {
        if (row.tokens.size() < 2)
            throw ParseError(row.line, 1, "demand row needs junction and demand");
        Junction& j = junction_for(row, row.tokens[0]);
        j.base_demand_lps = need_number(row, 1, "demand");
        if (row.tokens.size() > 2) j.pattern_id = row.tokens[2];
    }
    for (const auto& row : emitter_rows) {
        if (row.tokens.size() < 2)
            throw ParseError(row.line, 1, "emitter row needs junction and coefficient");
        junction_for(row, row.tokens[0]).emitter_coeff = need_number(row, 1, "emitter coefficient");
    }
    for (const auto& row : tag_rows) {
        if (row.tokens.size() < 3)
            throw ParseError(row.line, 1, "tag row needs kind, id, key=value");
        std::string kind = lower(row.tokens[0]);
        const std::string& id = row.tokens[1];
        const std::string& kv = row.tokens[2];
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ParseError(row.line, 1, "tag must be key=value, got '" + kv + "'");
        std::string key = lower(kv.substr(0, eq));
        std::string value = kv.substr(eq + 1);

        if (kind == "pipe" || kind == "link") {
            Pipe* p = nullptr;
            for (auto& cand : model.pipes)
                if (cand.id == id) p = &cand;
            if (!p) throw ParseError(row.line, 1, "tag references unknown pipe '" + id + "'");
            if (key == "material")
                p->material = value;
            else if (key == "age_years") {
                auto v = parse_double(value);
                if (!v) throw ParseError(row.line, 1, "age_years must be a number");
                p->age_years = *v;
            } else {
                throw ParseError(row.line, 1, "unknown pipe tag key '" + key + "'");
            }
        } else if (kind == "node" || kind == "junction") {
            Junction& j = junction_for(row, id);
            if (key == "zone")
                j.zone = value;
            else if (key == "age_years") {
                auto v = parse_double(value);
                if (!v) throw ParseError(row.line, 1, "age_years must be a number");
                j.age_years = *v;
            } else {
                throw ParseError(row.line, 1, "unknown node tag key '" + key + "'");
            }
        } else {
            throw ParseError(row.line, 1, "unknown tag kind '" + row.tokens[0] + "'");
        }
    }

    if (!units_seen && !model.junctions.empty() && !model.pipes.empty()) {
        result.diagnostics.push_back(
            {Severity::warning, "UNITS", "no [OPTIONS] Units row; assuming LPS"});
    }

    return result;
}

namespace {

void write_time(std::ostringstream& os, const char* key, double seconds) {
    os << key << '\t' << format_double(seconds) << " SECONDS\n";
}

} // namespace

std::string write_inp(const NetworkModel& m) {
    std::ostringstream os;
    os << "[TITLE]\n";
    if (!m.title.empty()) os << m.title << '\n';
    os << '\n';

    os << "[JUNCTIONS]\n;id\televation\tdemand\tpattern\n";
    for (const auto& j : m.junctions) {
        os << j.id << '\t' << format_double(j.elevation_m) << '\t'
           << format_double(j.base_demand_lps);
        if (!j.pattern_id.empty()) os << '\t' << j.pattern_id;
        os << '\n';
    }
    os << '\n';

    os << "[RESERVOIRS]\n;id\thead\tpattern\n";
    for (const auto& r : m.reservoirs) {
        os << r.id << '\t' << format_double(r.head_m);
        if (!r.head_pattern.empty()) os << '\t' << r.head_pattern;
        os << '\n';
    }
    os << '\n';

    os << "[PIPES]\n;id\tfrom\tto\tlength\tdiameter\troughness\tminor_loss\tstatus\n";
    for (const auto& p : m.pipes) {
        os << p.id << '\t' << p.from << '\t' << p.to << '\t'
           << format_double(p.length_m) << '\t' << format_double(p.diameter_mm) << '\t'
           << format_double(p.roughness) << '\t' << format_double(p.minor_loss_k) << '\t'
           << (p.status == LinkStatus::open ? "Open" : "Closed") << '\n';
    }
    os << '\n';

    if (!m.valves.empty()) {
        os << "[VALVES]\n;id\tfrom\tto\tdiameter\tkind\tloss_coeff\tstatus\n";
        for (const auto& v : m.valves) {
            os << v.id << '\t' << v.from << '\t' << v.to << '\t'
               << format_double(v.diameter_mm) << '\t' << v.kind << '\t'
               << format_double(v.loss_coeff_k) << '\t'
               << (v.status == LinkStatus::open ? "Open" : "Closed") << '\n';
        }
        os << '\n';
    }

    bool any_emitter = std::any_of(m.junctions.begin(), m.junctions.end(),
                                   [](const Junction& j) { return j.emitter_coeff != 0.0; });
    if (any_emitter) {
        os << "[EMITTERS]\n;junction\tcoefficient\n";
        for (const auto& j : m.junctions)
            if (j.emitter_coeff != 0.0)
                os << j.id << '\t' << format_double(j.emitter_coeff) << '\n';
        os << '\n';
    }

    if (!m.patterns.empty()) {
        os << "[PATTERNS]\n;id\tmultipliers\n";
        for (const auto& [id, mults] : m.patterns) {
            // six multipliers per row, EPANET style
            for (size_t i = 0; i < mults.size(); i += 6) {
                os << id;
                for (size_t k = i; k < std::min(mults.size(), i + 6); ++k)
                    os << '\t' << format_double(mults[k]);
                os << '\n';
            }
        }
        os << '\n';
    }

    os << "[OPTIONS]\n";
    os << "Units\tLPS\n";
    os << "Headloss\t"
       << (m.options.headloss == HeadlossFormula::darcy_weisbach ? "D-W" : "H-W") << '\n';
    os << "Emitter Exponent\t" << format_double(m.options.emitter_exponent) << '\n';
    os << '\n';

    os << "[TIMES]\n";
    write_time(os, "Duration", m.options.duration_s);
    write_time(os, "Hydraulic Timestep", m.options.hydraulic_step_s);
    write_time(os, "Pattern Timestep", m.options.pattern_step_s);
    os << '\n';

    bool any_tag = false;
    for (const auto& p : m.pipes)
        if (!p.material.empty() || p.age_years) any_tag = true;
    for (const auto& j : m.junctions)
        if (!j.zone.empty() || j.age_years) any_tag = true;
    if (any_tag) {
        os << "[TAGS]\n;kind\tid\tkey=value\n";
        for (const auto& p : m.pipes) {
            if (!p.material.empty()) os << "PIPE\t" << p.id << "\tmaterial=" << p.material << '\n';
            if (p.age_years) os << "PIPE\t" << p.id << "\tage_years=" << format_double(*p.age_years) << '\n';
        }
        for (const auto& j : m.junctions) {
            if (!j.zone.empty()) os << "NODE\t" << j.id << "\tzone=" << j.zone << '\n';
            if (j.age_years) os << "NODE\t" << j.id << "\tage_years=" << format_double(*j.age_years) << '\n';
        }
        os << '\n';
    }

    if (!m.coordinates.empty()) {
        os << "[COORDINATES]\n;node\tx\ty\n";
        for (const auto& [id, xy] : m.coordinates)
            os << id << '\t' << format_double(xy.first) << '\t' << format_double(xy.second) << '\n';
        os << '\n';
    }

    os << "[END]\n";
    return os.str();
}

namespace {

bool close12(double a, double b) {
    if (a == b) return true;
    double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= 1e-12 * scale;
}

bool opt_close(const std::optional<double>& a, const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || close12(*a, *b);
}

} // namespace

bool models_equivalent(const NetworkModel& a, const NetworkModel& b) {
    if (a.junctions.size() != b.junctions.size() ||
        a.reservoirs.size() != b.reservoirs.size() || a.pipes.size() != b.pipes.size() ||
        a.valves.size() != b.valves.size() || a.patterns.size() != b.patterns.size())
        return false;

    for (size_t i = 0; i < a.junctions.size(); ++i) {
        const auto& x = a.junctions[i];
        const auto& y = b.junctions[i];
        if (x.id != y.id || !close12(x.elevation_m, y.elevation_m) ||
            !close12(x.base_demand_lps, y.base_demand_lps) || x.pattern_id != y.pattern_id ||
            !close12(x.emitter_coeff, y.emitter_coeff) || x.zone != y.zone ||
            !opt_close(x.age_years, y.age_years))
            return false;
    }
    for (size_t i = 0; i < a.reservoirs.size(); ++i) {
        const auto& x = a.reservoirs[i];
        const auto& y = b.reservoirs[i];
        if (x.id != y.id || !close12(x.head_m, y.head_m) || x.head_pattern != y.head_pattern)
            return false;
    }
    for (size_t i = 0; i < a.pipes.size(); ++i) {
        const auto& x = a.pipes[i];
        const auto& y = b.pipes[i];
        if (x.id != y.id || x.from != y.from || x.to != y.to ||
            !close12(x.length_m, y.length_m) || !close12(x.diameter_mm, y.diameter_mm) ||
            !close12(x.roughness, y.roughness) || !close12(x.minor_loss_k, y.minor_loss_k) ||
            x.status != y.status || x.material != y.material ||
            !opt_close(x.age_years, y.age_years))
            return false;
    }
    for (size_t i = 0; i < a.valves.size(); ++i) {
        const auto& x = a.valves[i];
        const auto& y = b.valves[i];
        if (x.id != y.id || x.from != y.from || x.to != y.to ||
            !close12(x.diameter_mm, y.diameter_mm) || x.kind != y.kind ||
            !close12(x.loss_coeff_k, y.loss_coeff_k) || x.status != y.status)
            return false;
    }
    for (const auto& [id, mults] : a.patterns) {
        auto it = b.patterns.find(id);
        if (it == b.patterns.end() || it->second.size() != mults.size()) return false;
        for (size_t i = 0; i < mults.size(); ++i)
            if (!close12(mults[i], it->second[i])) return false;
    }
    const auto& oa = a.options;
    const auto& ob = b.options;
    return oa.headloss == ob.headloss && close12(oa.duration_s, ob.duration_s) &&
           close12(oa.hydraulic_step_s, ob.hydraulic_step_s) &&
           close12(oa.pattern_step_s, ob.pattern_step_s) &&
           close12(oa.emitter_exponent, ob.emitter_exponent);
}

} // namespace aquacal
