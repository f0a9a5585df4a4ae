#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "baldur/linalg.hpp"

namespace baldur {

// Numeric table with a header row of column names.
struct NumericTable {
  std::vector<std::string> header;
  Matrix values;
};

// Reads a comma-separated numeric table: first row names, every later row a
// sample. Throws MissingFile, ParseError or NonFiniteValue.
NumericTable read_numeric_csv(const std::filesystem::path& path);

// Writes with 17 significant digits so values read back bit-exactly.
void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const Matrix& values);

std::string format_double(double v);

}  // namespace baldur
