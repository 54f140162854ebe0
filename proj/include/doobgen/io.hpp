#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"

namespace doobgen {

/// Shortest-roundtrip-safe decimal text (%.17g).
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw FileError("failed writing: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string join(const std::vector<std::string>& cells, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += sep;
    out += cells[i];
  }
  return out;
}

/// CSV with a header row, LF line endings.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string text = join(header) + '\n';
  for (const auto& r : rows) text += join(r) + '\n';
  write_text(path, text);
}

/// Matrix as CSV; default header x1..xD.
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m, std::vector<std::string> header = {}) {
  if (header.empty()) {
    for (std::size_t j = 0; j < m.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  }
  detail::require<ShapeError>(header.size() == m.cols(), "write_matrix_csv: header/column count mismatch");
  std::string text = join(header) + '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) text += ',';
      text += format_double(m(i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    out.push_back(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

/// Reads a numeric CSV with a header row.
inline Matrix read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FileError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto head = split(line);
  if (header) *header = head;
  std::vector<double> values;
  std::size_t rows = 0, lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != head.size()) {
      throw FileError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(head.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw FileError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      }
    }
    ++rows;
  }
  Matrix m(rows, head.size());
  m.data() = std::move(values);
  return m;
}

}  // namespace doobgen
