#include "baldur/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "baldur/errors.hpp"

namespace baldur {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

}  // namespace

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());

  NumericTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, path.string() + " is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto& name : split_line(line)) table.header.push_back(trim(name));
  const auto cols = static_cast<Index>(table.header.size());

  std::vector<double> flat;
  Index rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (static_cast<Index>(cells.size()) != cols) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": expected " << cols << " fields, got "
          << cells.size();
      throw Error(ErrorKind::ParseError, msg.str());
    }
    for (const auto& raw : cells) {
      const std::string cell = trim(raw);
      double v = 0.0;
      const auto* begin = cell.data();
      const auto* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (cell.empty() || ec != std::errc() || ptr != end) {
        if (cell == "nan" || cell == "NaN" || cell == "inf" || cell == "-inf" || cell == "Inf") {
          throw Error(ErrorKind::NonFiniteValue,
                      path.string() + ":" + std::to_string(line_no) + ": " + cell);
        }
        throw Error(ErrorKind::ParseError,
                    path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::NonFiniteValue,
                    path.string() + ":" + std::to_string(line_no) + ": " + cell);
      }
      flat.push_back(v);
    }
    ++rows;
  }
  table.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, cols);
  return table;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

}  // namespace baldur
