#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pvlstm {

/// Shortest decimal form that parses back to the same value
/// (std::to_chars); locale-independent, used for all file output.
std::string format_float(float v);
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long> parse_long(std::string_view s);

/// Split on a delimiter without unquoting; the canonical formats never quote.
std::vector<std::string_view> split_fields(std::string_view line, char delim = ',');

std::string_view trim(std::string_view s);

}  // namespace pvlstm
