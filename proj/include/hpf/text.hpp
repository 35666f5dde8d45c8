#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hpf::text {

std::string_view trim(std::string_view s);
std::string lower(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Whole-field parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);
std::optional<long> parse_long(std::string_view s);

}  // namespace hpf::text
