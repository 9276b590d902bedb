#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hetprod {

struct DelimitedTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws DataError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Reads a header-first delimited text file. The delimiter is a tab when the
/// header line contains one, a comma otherwise.
DelimitedTable read_delimited(const std::filesystem::path& path);

// Round-trip formatting for doubles ("%.17g"); "nan"/"inf" for non-finite.
std::string format_double(double v);

// Parses a numeric cell; empty, "NA", "nan" and similar yield NaN.
double parse_cell(std::string_view cell);

void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace hetprod
