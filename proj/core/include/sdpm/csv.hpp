#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sdpm::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row (for error messages).
  std::vector<std::size_t> lines;
};

// RFC-4180-ish reader: quoted fields, doubled quotes, CRLF. Blank lines are
// skipped. A row whose field count differs from the header is a ParseError.
Table read(std::istream& in);
Table read_file(const std::string& path);

std::string escape(std::string_view field);
// Shortest text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace sdpm::csv
