#include "aquacal/rules.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace aquacal {

namespace {

// Whitespace tokenizer that keeps double-quoted literals together.
std::vector<std::string> tokenize(std::string_view line, int lineno) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        if (line[i] == '"') {
            auto close = line.find('"', i + 1);
            if (close == std::string_view::npos)
                throw ParseError(lineno, int(i + 1), "unterminated string literal");
            out.push_back('"' + std::string(line.substr(i + 1, close - i - 1)));
            i = close + 1;
        } else {
            size_t j = i;
            while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
                ++j;
            out.push_back(std::string(line.substr(i, j - i)));
            i = j;
        }
    }
    return out;
}

CmpOp parse_op(const std::string& tok, int lineno) {
    if (tok == "==") return CmpOp::eq;
    if (tok == "!=") return CmpOp::ne;
    if (tok == "<") return CmpOp::lt;
    if (tok == "<=") return CmpOp::le;
    if (tok == ">") return CmpOp::gt;
    if (tok == ">=") return CmpOp::ge;
    throw ParseError(lineno, 1, "unknown comparison operator '" + tok + "'");
}

struct AttrInfo {
    bool is_string;
};

// Attribute vocabulary per element kind; anything else is a parse error.
const std::map<std::pair<ElementKind, std::string>, AttrInfo> kAttributes = {
    {{ElementKind::pipe, "material"}, {true}},
    {{ElementKind::pipe, "age_years"}, {false}},
    {{ElementKind::pipe, "diameter"}, {false}},
    {{ElementKind::junction, "zone"}, {true}},
    {{ElementKind::junction, "age_years"}, {false}},
    {{ElementKind::valve, "kind"}, {true}},
    {{ElementKind::valve, "diameter"}, {false}},
};

ParameterKind parse_parameter(const std::string& tok, int lineno) {
    if (tok == "roughness") return ParameterKind::roughness;
    if (tok == "minor_loss") return ParameterKind::minor_loss;
    if (tok == "base_demand") return ParameterKind::base_demand;
    if (tok == "leak_coeff") return ParameterKind::leak_coeff;
    if (tok == "valve_loss") return ParameterKind::valve_loss;
    if (tok == "diameter") return ParameterKind::diameter;
    throw ParseError(lineno, 1, "unknown parameter token '" + tok + "'");
}

ElementKind parse_kind(const std::string& tok, int lineno) {
    if (tok == "pipe") return ElementKind::pipe;
    if (tok == "junction") return ElementKind::junction;
    if (tok == "valve") return ElementKind::valve;
    throw ParseError(lineno, 1, "unknown element kind '" + tok + "'");
}

bool compare_strings(CmpOp op, const std::string& a, const std::string& b, int lineno,
                     const std::string& attr) {
    switch (op) {
        case CmpOp::eq: return a == b;
        case CmpOp::ne: return a != b;
        default:
            throw ParseError(lineno, 1,
                             "attribute '" + attr + "' only supports == and !=");
    }
}

bool compare_numbers(CmpOp op, double a, double b) {
    switch (op) {
        case CmpOp::eq: return a == b;
        case CmpOp::ne: return a != b;
        case CmpOp::lt: return a < b;
        case CmpOp::le: return a <= b;
        case CmpOp::gt: return a > b;
        case CmpOp::ge: return a >= b;
    }
    return false;
}

} // namespace

std::vector<Rule> parse_rules(std::string_view text) {
    std::vector<Rule> rules;
    std::set<std::string> seen_ids;

    struct Open {
        Rule rule;
        int start_line = 0;
        bool has_match = false, has_param = false, has_bounds = false;
        int prior_line = 0;
        bool prior_is_triangular = false;
    };
    std::optional<Open> open;

    int lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view raw = (eol == std::string_view::npos) ? text.substr(pos)
                                                               : text.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++lineno;

        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        auto toks = tokenize(line, lineno);
        const std::string& head = toks[0];

        if (head == "rule") {
            if (open)
                throw ParseError(lineno, 1, "rule block opened before previous 'end'");
            if (toks.size() != 2)
                throw ParseError(lineno, 1, "expected 'rule <id>'");
            if (!seen_ids.insert(toks[1]).second)
                throw ParseError(lineno, 1, "duplicate rule id '" + toks[1] + "'");
            open = Open{};
            open->rule.id = toks[1];
            open->rule.position = int(rules.size());
            open->start_line = lineno;
            continue;
        }
        if (!open)
            throw ParseError(lineno, 1, "'" + head + "' outside a rule block");
        Rule& r = open->rule;

        if (head == "match") {
            if (toks.size() < 2) throw ParseError(lineno, 1, "expected 'match <kind>'");
            r.target_kind = parse_kind(toks[1], lineno);
            open->has_match = true;
            size_t i = 2;
            if (i < toks.size()) {
                if (toks[i] != "where")
                    throw ParseError(lineno, 1, "expected 'where' after match kind");
                ++i;
                bool first = true;
                while (i < toks.size()) {
                    if (!first) {
                        if (toks[i] != "and")
                            throw ParseError(lineno, 1, "expected 'and' between conditions");
                        ++i;
                    }
                    first = false;
                    if (i + 2 >= toks.size())
                        throw ParseError(lineno, 1, "incomplete condition");
                    Condition c;
                    c.attribute = toks[i];
                    auto info = kAttributes.find({r.target_kind, c.attribute});
                    if (info == kAttributes.end())
                        throw ParseError(lineno, 1,
                                         "unknown attribute '" + c.attribute + "' for " +
                                             std::string(to_string(r.target_kind)));
                    c.op = parse_op(toks[i + 1], lineno);
                    const std::string& val = toks[i + 2];
                    if (info->second.is_string) {
                        if (val.empty() || val[0] != '"')
                            throw ParseError(lineno, 1, "attribute '" + c.attribute +
                                                            "' needs a quoted string");
                        if (c.op != CmpOp::eq && c.op != CmpOp::ne)
                            throw ParseError(lineno, 1, "attribute '" + c.attribute +
                                                            "' only supports == and !=");
                        c.is_string = true;
                        c.str_value = val.substr(1);
                    } else {
                        auto num = parse_double(val);
                        if (!num)
                            throw ParseError(lineno, 1, "attribute '" + c.attribute +
                                                            "' needs a numeric literal");
                        c.num_value = *num;
                    }
                    r.predicate.push_back(std::move(c));
                    i += 3;
                }
            }
        } else if (head == "param") {
            if (toks.size() != 2) throw ParseError(lineno, 1, "expected 'param <name>'");
            r.parameter = parse_parameter(toks[1], lineno);
            open->has_param = true;
        } else if (head == "bounds") {
            if (toks.size() != 3) throw ParseError(lineno, 1, "expected 'bounds <lo> <hi>'");
            auto lo = parse_double(toks[1]);
            auto hi = parse_double(toks[2]);
            if (!lo || !hi) throw ParseError(lineno, 1, "bounds must be numbers");
            if (*lo > *hi)
                throw ParseError(lineno, 1, "bounds lo " + toks[1] + " exceeds hi " + toks[2]);
            r.lo = *lo;
            r.hi = *hi;
            open->has_bounds = true;
        } else if (head == "prior") {
            if (toks.size() >= 2 && toks[1] == "uniform" && toks.size() == 2) {
                r.prior = {PriorKind::uniform, 0.0};
            } else if (toks.size() == 3 && toks[1] == "triangular") {
                auto mode = parse_double(toks[2]);
                if (!mode) throw ParseError(lineno, 1, "triangular mode must be a number");
                r.prior = {PriorKind::triangular, *mode};
                open->prior_is_triangular = true;
                open->prior_line = lineno;
            } else {
                throw ParseError(lineno, 1,
                                 "expected 'prior uniform' or 'prior triangular <mode>'");
            }
        } else if (head == "group") {
            if (toks.size() != 2 || (toks[1] != "flow" && toks[1] != "pressure"))
                throw ParseError(lineno, 1, "expected 'group flow' or 'group pressure'");
            r.group = toks[1] == "flow" ? Group::flow : Group::pressure;
        } else if (head == "end") {
            if (toks.size() != 1) throw ParseError(lineno, 1, "unexpected tokens after 'end'");
            if (!open->has_match || !open->has_param || !open->has_bounds)
                throw ParseError(open->start_line, 1,
                                 "rule '" + r.id + "' needs match, param, and bounds");
            if (r.parameter != ParameterKind::diameter &&
                !parameter_applies_to(r.parameter, r.target_kind))
                throw ParseError(open->start_line, 1,
                                 "parameter " + std::string(to_string(r.parameter)) +
                                     " does not apply to " +
                                     std::string(to_string(r.target_kind)));
            if (open->prior_is_triangular &&
                (r.prior.mode < r.lo || r.prior.mode > r.hi))
                throw ParseError(open->prior_line, 1,
                                 "triangular mode outside bounds in rule '" + r.id + "'");
            rules.push_back(std::move(open->rule));
            open.reset();
        } else {
            throw ParseError(lineno, 1, "unknown rule-file token '" + head + "'");
        }
    }
    if (open)
        throw ParseError(open->start_line, 1, "rule '" + open->rule.id + "' missing 'end'");
    return rules;
}

namespace {

bool matches(const Rule& rule, const NetworkModel& model, const std::string& id) {
    for (const auto& c : rule.predicate) {
        if (rule.target_kind == ElementKind::pipe) {
            const Pipe* p = model.find_pipe(id);
            if (c.attribute == "material") {
                if (!compare_strings(c.op, p->material, c.str_value, 0, c.attribute))
                    return false;
            } else if (c.attribute == "age_years") {
                if (!p->age_years || !compare_numbers(c.op, *p->age_years, c.num_value))
                    return false;
            } else if (c.attribute == "diameter") {
                if (!compare_numbers(c.op, p->diameter_mm, c.num_value)) return false;
            }
        } else if (rule.target_kind == ElementKind::junction) {
            const Junction* j = model.find_junction(id);
            if (c.attribute == "zone") {
                if (!compare_strings(c.op, j->zone, c.str_value, 0, c.attribute))
                    return false;
            } else if (c.attribute == "age_years") {
                if (!j->age_years || !compare_numbers(c.op, *j->age_years, c.num_value))
                    return false;
            }
        } else {
            const Valve* v = model.find_valve(id);
            if (c.attribute == "kind") {
                if (!compare_strings(c.op, v->kind, c.str_value, 0, c.attribute))
                    return false;
            } else if (c.attribute == "diameter") {
                if (!compare_numbers(c.op, v->diameter_mm, c.num_value)) return false;
            }
        }
    }
    return true;
}

} // namespace

ParameterSpace compile_rules(const std::vector<Rule>& rules, const NetworkModel& model) {
    for (const auto& r : rules)
        if (r.parameter == ParameterKind::diameter)
            throw ModelError("rule '" + r.id + "': diameter is reserved and not calibratable");

    // (kind, id, parameter) -> matching rules in file order
    std::map<std::tuple<int, std::string, std::string>, std::vector<const Rule*>> matched;
    for (const auto& rule : rules) {
        std::vector<std::string> ids;
        if (rule.target_kind == ElementKind::pipe)
            for (const auto& p : model.pipes) ids.push_back(p.id);
        else if (rule.target_kind == ElementKind::junction)
            for (const auto& j : model.junctions) ids.push_back(j.id);
        else
            for (const auto& v : model.valves) ids.push_back(v.id);
        for (const auto& id : ids)
            if (matches(rule, model, id))
                matched[{int(rule.target_kind), id, to_string(rule.parameter)}].push_back(
                    &rule);
    }

    ParameterSpace space;
    for (const auto& [key, contributors] : matched) {
        ParameterSpec spec;
        spec.element_kind = ElementKind(std::get<0>(key));
        spec.element_id = std::get<1>(key);
        spec.parameter = contributors.front()->parameter;

        double lo = contributors.front()->lo;
        double hi = contributors.front()->hi;
        for (const Rule* r : contributors) {
            lo = std::max(lo, r->lo);
            hi = std::min(hi, r->hi);
            spec.source_rule_ids.push_back(r->id);
        }
        if (lo > hi) {
            std::ostringstream os;
            os << "conflicting bounds for " << spec.label() << ": rules";
            for (const Rule* r : contributors) os << ' ' << r->id;
            os << " have empty intersection";
            throw ModelError(os.str());
        }
        spec.lo = lo;
        spec.hi = hi;

        const Rule* controlling = contributors.front();
        for (const Rule* r : contributors)
            if (r->specificity() > controlling->specificity() ||
                (r->specificity() == controlling->specificity() &&
                 r->position >= controlling->position))
                controlling = r;
        spec.prior = controlling->prior;
        spec.group = controlling->group.value_or(default_group(spec.parameter));
        if (spec.prior.kind == PriorKind::triangular &&
            (spec.prior.mode < lo || spec.prior.mode > hi)) {
            throw ModelError("triangular mode of rule '" + controlling->id +
                             "' falls outside the intersected bounds for " + spec.label());
        }
        space.specs.push_back(std::move(spec));
    }

    std::sort(space.specs.begin(), space.specs.end(),
              [](const ParameterSpec& a, const ParameterSpec& b) {
                  auto ka = std::tuple(int(a.element_kind), a.element_id,
                                       std::string(to_string(a.parameter)));
                  auto kb = std::tuple(int(b.element_kind), b.element_id,
                                       std::string(to_string(b.parameter)));
                  return ka < kb;
              });
    space.rebuild_group_indices();
    return space;
}

} // namespace aquacal
