#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace hte {

// A header row plus a dense numeric matrix; the on-disk form is plain CSV.
// All input files the library consumes and all tabular files it emits go
// through this type.
struct NumericTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // one row per record, one column per header entry

  Eigen::Index n_rows() const { return values.rows(); }
  Eigen::Index n_cols() const { return values.cols(); }

  // Index of a named column, or -1 if absent.
  Eigen::Index column_index(const std::string& name) const;
  bool has_column(const std::string& name) const {
    return column_index(name) >= 0;
  }
};

// Reads a strictly numeric CSV file.  Errors identify the offending row
// (1-based, counting the header as row 1) and column by name:
//   - unreadable file                    -> IoError
//   - empty file / header only is fine (zero rows)
//   - ragged row or non-numeric cell     -> ValidationError
NumericTable read_csv(const std::string& path);

// Writes a table as CSV.  Values are rendered with the shortest decimal form
// that round-trips to the same double, so write + read is bit-exact.
void write_csv(const NumericTable& table, const std::string& path);

// Shortest round-trip rendering of a double (std::to_chars).
std::string format_double(double x);

// Fixed six-significant-digit rendering ("%.6g"); used by report files where
// stable, human-scale output matters more than round-tripping.
std::string format_g6(double x);

// Round to six significant digits (the numeric counterpart of format_g6,
// applied to values embedded in JSON reports).
double round_g6(double x);

}  // namespace hte
