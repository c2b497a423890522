#include "bnp/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "bnp/errors.hpp"

namespace bnp {

namespace {

std::string_view trim(std::string_view cell) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t'))
    cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t'))
    cell.remove_suffix(1);
  return cell;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool try_parse(std::string_view cell, double& out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto result = std::from_chars(begin, end, out);
  return result.ec == std::errc() && result.ptr == end && !cell.empty();
}

}  // namespace

std::string format_double(double value) {
  char buffer[32];
  const auto result =
      std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

DatasetTable parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t newline = text.find('\n', start);
    if (newline == std::string_view::npos) newline = text.size();
    std::string_view line = text.substr(start, newline - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = newline + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("csv: no rows");

  const auto first_cells = split_row(lines[0]);
  const std::size_t columns = first_cells.size();

  DatasetTable table;
  std::size_t data_start = 0;
  double probe = 0.0;
  for (const auto cell : first_cells)
    if (!try_parse(cell, probe)) {
      for (const auto name : first_cells) table.header.emplace_back(name);
      data_start = 1;
      break;
    }

  const std::size_t data_rows = lines.size() - data_start;
  table.values.resize(static_cast<Eigen::Index>(data_rows),
                      static_cast<Eigen::Index>(columns));
  for (std::size_t r = data_start; r < lines.size(); ++r) {
    const auto cells = split_row(lines[r]);
    if (cells.size() != columns) {
      std::ostringstream message;
      message << "csv: row " << r + 1 << " has " << cells.size()
              << " cells, expected " << columns;
      throw ParseError(message.str());
    }
    for (std::size_t c = 0; c < columns; ++c) {
      double value = 0.0;
      if (!try_parse(cells[c], value) || !std::isfinite(value)) {
        std::ostringstream message;
        message << "csv: row " << r + 1 << ", column " << c + 1
                << ": not a finite number: '" << cells[c] << "'";
        throw ParseError(message.str());
      }
      table.values(static_cast<Eigen::Index>(r - data_start),
                   static_cast<Eigen::Index>(c)) = value;
    }
  }
  return table;
}

DatasetTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("csv: cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_csv(buffer.str());
  } catch (const ParseError& error) {
    throw ParseError(path.string() + ": " + error.what());
  }
}

std::string format_csv(const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values) {
  if (!header.empty() &&
      static_cast<Eigen::Index>(header.size()) != values.cols() &&
      values.size() > 0)
    throw UsageError("csv: header width does not match value columns");
  std::string out;
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c > 0) out += ',';
      out += header[c];
    }
    out += '\n';
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("csv: cannot write " + path.string());
  out << format_csv(header, values);
  if (!out) throw UsageError("csv: write failed for " + path.string());
}

}  // namespace bnp
