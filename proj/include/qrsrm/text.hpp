#pragma once

// Small string helpers shared by the parsers.

#include <string>
#include <string_view>
#include <vector>

namespace qrsrm {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Whole-string parse; throws std::invalid_argument on trailing garbage.
double parse_number(std::string_view s);
long long parse_integer(std::string_view s);
std::vector<double> parse_number_list(std::string_view s, char sep = ',');

/// Shortest text that round-trips to the same double.
std::string format_number(double v);

}  // namespace qrsrm
