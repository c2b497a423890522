#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bnp {

// Numeric table with an optional header row. The header is detected by a
// non-numeric first row; data cells must all be finite reals.
struct DatasetTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  bool has_header() const { return !header.empty(); }
  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

DatasetTable parse_csv(std::string_view text);
DatasetTable read_csv(const std::filesystem::path& path);

std::string format_csv(const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values);
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

}  // namespace bnp
