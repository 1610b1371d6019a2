#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rtm::csv {

// RFC-style quoting, applied only when a field needs it.
std::string escape(const std::string& field);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

// Splits one CSV line, honoring double-quoted fields with "" escapes.
std::vector<std::string> split_line(const std::string& line);

// Shortest representation that round-trips the exact double. Deterministic.
std::string format_double(double v);

double parse_double(const std::string& s);
long parse_long(const std::string& s);

}  // namespace rtm::csv
