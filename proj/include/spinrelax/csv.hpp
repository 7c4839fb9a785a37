#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace spinrelax::csv {

/// Reads one line, stripping a trailing '\r'. Returns false at end of input.
bool read_line(std::istream& in, std::string& line);

std::vector<std::string> split(std::string_view line, char sep = ',');

std::string trim(std::string_view s);

/// Strict decimal parse of the whole field; throws ParseError(line) on failure.
double parse_double(std::string_view field, std::size_t line);

/// Shortest representation that round-trips a double.
std::string format_double(double v);

}  // namespace spinrelax::csv
