#include "hte/table.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "hte/errors.hpp"

namespace hte {

Eigen::Index NumericTable::column_index(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] == name) return static_cast<Eigen::Index>(j);
  }
  return -1;
}

namespace {

// Splits one CSV line on commas.  Cells are trimmed of surrounding spaces and
// a trailing '\r' (files written on Windows).
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    std::string cell = line.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    while (!cell.empty() &&
           (cell.back() == '\r' || cell.back() == ' ' || cell.back() == '\t')) {
      cell.pop_back();
    }
    std::size_t lead = 0;
    while (lead < cell.size() && (cell[lead] == ' ' || cell[lead] == '\t')) {
      ++lead;
    }
    cells.push_back(cell.substr(lead));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row,
                  const std::string& column, const std::string& path) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end || cell.empty()) {
    throw ValidationError(path + ": row " + std::to_string(row) +
                          ", column '" + column + "': cannot parse '" + cell +
                          "' as a number");
  }
  return value;
}

}  // namespace

NumericTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(path + ": file is empty (no header row)");
  }
  NumericTable table;
  table.columns = split_line(line);
  if (table.columns.size() == 1 && table.columns[0].empty()) {
    throw ValidationError(path + ": header row is empty");
  }
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (table.columns[j].empty()) {
      throw ValidationError(path + ": header has an empty column name at position " +
                            std::to_string(j + 1));
    }
    for (std::size_t k = 0; k < j; ++k) {
      if (table.columns[k] == table.columns[j]) {
        throw ValidationError(path + ": duplicate column name '" +
                              table.columns[j] + "'");
      }
    }
  }

  const std::size_t p = table.columns.size();
  std::vector<double> data;
  std::size_t n = 0;
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto cells = split_line(line);
    if (cells.size() != p) {
      throw ValidationError(path + ": row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(p));
    }
    for (std::size_t j = 0; j < p; ++j) {
      data.push_back(parse_cell(cells[j], row, table.columns[j], path));
    }
    ++n;
  }

  table.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          data[i * p + j];
    }
  }
  return table;
}

void write_csv(const NumericTable& table, const std::string& path) {
  if (table.columns.size() != static_cast<std::size_t>(table.values.cols())) {
    throw ValidationError("write_csv: header has " +
                          std::to_string(table.columns.size()) +
                          " names but the matrix has " +
                          std::to_string(table.values.cols()) + " columns");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing");
  }
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j) out << ',';
    out << table.columns[j];
  }
  out << '\n';
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      if (j) out << ',';
      out << format_double(table.values(i, j));
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("error while writing '" + path + "'");
  }
}

std::string format_double(double x) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, result.ptr);
}

std::string format_g6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return std::string(buf);
}

double round_g6(double x) {
  if (!std::isfinite(x)) return x;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return std::strtod(buf, nullptr);
}

}  // namespace hte
