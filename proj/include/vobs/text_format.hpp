#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vobs::text {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

// Strict parse of the whole field; throws ValidationError on failure.
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace vobs::text
