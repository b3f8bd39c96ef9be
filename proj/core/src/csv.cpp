#include "sdpm/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "sdpm/errors.hpp"

namespace sdpm::csv {
namespace {

// Parses one logical record starting at `line`; may consume several physical
// lines when a quoted field contains a newline.
bool read_record(std::istream& in, std::size_t& line_no, std::vector<std::string>& out,
                 std::size_t& record_line) {
  out.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_no;
  record_line = line_no;

  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  for (;;) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field.push_back('"');
            ++i;
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(c);
        }
      } else if (c == '"') {
        if (!field.empty()) throw ParseError(record_line, "stray quote inside unquoted field");
        in_quotes = true;
        was_quoted = true;
      } else if (c == ',') {
        out.push_back(std::move(field));
        field.clear();
        was_quoted = false;
      } else if (c == '\r' && i + 1 == line.size()) {
        // CRLF
      } else {
        if (was_quoted) throw ParseError(record_line, "characters after closing quote");
        field.push_back(c);
      }
    }
    if (!in_quotes) break;
    if (!std::getline(in, line)) throw ParseError(record_line, "unterminated quoted field");
    ++line_no;
    field.push_back('\n');
  }
  out.push_back(std::move(field));
  return true;
}

bool is_blank(const std::vector<std::string>& rec) {
  return rec.size() == 1 && rec[0].find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

Table read(std::istream& in) {
  Table t;
  std::size_t line_no = 0;
  std::size_t rec_line = 0;
  std::vector<std::string> rec;
  while (read_record(in, line_no, rec, rec_line)) {
    if (is_blank(rec)) continue;
    if (t.header.empty()) {
      t.header = rec;
      continue;
    }
    if (rec.size() != t.header.size()) {
      throw ParseError(rec_line, "expected " + std::to_string(t.header.size()) + " fields, got " +
                                     std::to_string(rec.size()));
    }
    t.rows.push_back(rec);
    t.lines.push_back(rec_line);
  }
  if (t.header.empty()) throw ParseError(1, "missing header row");
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open file: " + path);
  return read(f);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace sdpm::csv
