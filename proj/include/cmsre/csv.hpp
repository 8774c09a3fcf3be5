#pragma once

// Plain numeric CSV reading/writing. Doubles are written in shortest
// round-trip form so that output is exact and reproducible.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "cmsre/error.hpp"

namespace cmsre::csv {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("to_chars failed");
  return std::string(buf, ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view tok, const std::string& where) {
  tok = trim(tok);
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
    throw input_error("malformed number '" + std::string(tok) + "' at " + where);
  return v;
}

/// Reads a headerless numeric CSV into a dense matrix. Blank lines are
/// skipped; every row must have the same number of fields.
inline Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open file: " + path.string());

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::string_view rest(line);
    std::size_t col = 0;
    while (true) {
      const auto comma = rest.find(',');
      const auto tok = rest.substr(0, comma);
      row.push_back(parse_double(tok, path.string() + " line " +
                                          std::to_string(line_no) + " field " +
                                          std::to_string(col + 1)));
      ++col;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw input_error("ragged row at " + path.string() + " line " +
                        std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw input_error("empty matrix file: " + path.string());

  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  return m;
}

inline std::string to_string(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

/// Writes `contents` to a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path,
                         const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot write file: " + tmp.string());
    out << contents;
    if (!out) throw input_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw input_error("cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_matrix(const std::filesystem::path& path,
                         const Eigen::MatrixXd& m) {
  write_atomic(path, to_string(m));
}

}  // namespace cmsre::csv
