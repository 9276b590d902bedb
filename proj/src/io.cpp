#include "hetprod/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hetprod/errors.hpp"

namespace hetprod {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  std::string out(s.substr(b, e - b));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"')
    out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == delim && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(trim(field));
  return out;
}

}  // namespace

std::size_t DelimitedTable::column(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw DataError("missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool DelimitedTable::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

DelimitedTable read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read file '" + path.string() + "'");
  DelimitedTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file '" + path.string() + "'");
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  table.header = split(line, delim);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split(line, delim);
    if (fields.size() != table.header.size())
      throw DataError("row " + std::to_string(table.rows.size() + 2) + " of '" +
                      path.string() + "' has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_cell(std::string_view cell) {
  if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" ||
      cell == "nan" || cell == "." || cell == "NULL")
    return std::nan("");
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw DataError("not a number: '" + std::string(cell) + "'");
  return v;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace hetprod
