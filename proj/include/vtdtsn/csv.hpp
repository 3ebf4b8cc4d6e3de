#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vtdtsn {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  // Index of `name`; FormatError when absent.
  std::size_t require_column(std::string_view name) const;
};

// Comma-separated with a header row; fields containing commas, quotes or
// newlines are quoted with doubled inner quotes. Ragged rows are rejected.
CsvTable parse_csv(std::string_view text);
std::string write_csv(const CsvTable& table);

// Shortest text that parses back to the same double ("nan" for NaN).
std::string format_double(double v);
// FormatError naming `what` when `text` is empty or not a number.
double parse_double(std::string_view text, std::string_view what);

}  // namespace vtdtsn
