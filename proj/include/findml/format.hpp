#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace findml {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict full-string parse; returns false on trailing garbage or overflow.
bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::vector<std::string_view> split_view(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace findml
