#pragma once

// Plain CSV with a header row. Numbers use %.17g so they parse back exactly.

#include <iosfwd>
#include <string>
#include <vector>

namespace mmamba {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws if absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

std::string csv_number(double v);

/// Cells may not contain commas, quotes or newlines.
void write_csv(std::ostream& out, const CsvTable& table);
void save_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(std::istream& in);
CsvTable load_csv(const std::string& path);

}  // namespace mmamba
