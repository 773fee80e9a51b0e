#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aquacal/model.hpp"
#include "aquacal/params.hpp"

namespace aquacal {

enum class CmpOp { eq, ne, lt, le, gt, ge };

// One predicate conjunct, e.g. `material == "PE"` or `age_years > 20`.
struct Condition {
    std::string attribute;
    CmpOp op = CmpOp::eq;
    bool is_string = false;
    std::string str_value;
    double num_value = 0.0;
};

struct Rule {
    std::string id;
    ElementKind target_kind = ElementKind::pipe;
    std::vector<Condition> predicate;
    ParameterKind parameter = ParameterKind::roughness;
    double lo = 0.0;
    double hi = 0.0;
    Prior prior;
    std::optional<Group> group;
    int position = 0; // file order, used for tie-breaking

    int specificity() const { return int(predicate.size()); }
};

std::vector<Rule> parse_rules(std::string_view text);

// Intersects bounds across all matching rules per (element, parameter) and
// takes group/prior from the most specific match (later file position wins
// ties). Elements matched by no rule stay out of the space.
ParameterSpace compile_rules(const std::vector<Rule>& rules, const NetworkModel& model);

} // namespace aquacal
