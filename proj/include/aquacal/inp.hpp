#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "aquacal/model.hpp"

namespace aquacal {

struct InpParseResult {
    NetworkModel model;
    // Skipped-but-known sections and ignored option keys land here; hard
    // failures (syntax, duplicate id, dangling endpoint, unknown section)
    // throw ParseError instead.
    std::vector<Diagnostic> diagnostics;
};

// Parses the supported EPANET INP subset:
//   [TITLE] [JUNCTIONS] [RESERVOIRS] [PIPES] [VALVES] [DEMANDS] [PATTERNS]
//   [EMITTERS] [OPTIONS] [TIMES] [COORDINATES] [TAGS]
// Other standard EPANET sections ([TANKS], [PUMPS], ...) are skipped with a
// diagnostic each. `;` comments are stripped. Units must be LPS.
InpParseResult parse_inp(std::string_view text);

// Canonical serialization; numeric fields use shortest round-trip form, so
// parse_inp(write_inp(m)) reproduces m exactly.
std::string write_inp(const NetworkModel& model);

// Semantic equality: same elements and options, numeric attributes compared
// to 12 significant digits.
bool models_equivalent(const NetworkModel& a, const NetworkModel& b);

} // namespace aquacal
