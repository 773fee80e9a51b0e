#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aquacal {

enum class Severity { info, warning, error };

// One finding from validate() or a parser; rendered as "SEVERITY element-id message".
struct Diagnostic {
    Severity severity = Severity::error;
    std::string element;
    std::string message;
};

std::string to_string(const Diagnostic& d);
const char* to_string(Severity s);

inline bool has_errors(const std::vector<Diagnostic>& ds) {
    for (const auto& d : ds)
        if (d.severity == Severity::error) return true;
    return false;
}

// Input-text errors carry the 1-based source position.
class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ": " + what),
          line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

class BoundsError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ModelError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- small text helpers shared by the parsers and writers ----

std::string_view trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::string lower(std::string_view s);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Strict double/long parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long> parse_long(std::string_view s);

// 64-bit FNV-1a, used for content fingerprints.
std::uint64_t fnv1a64(std::string_view data);
std::string fingerprint_hex(std::string_view data);

} // namespace aquacal
