#pragma once

// Comma-separated tables: one header row, numbers with 17 significant digits.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gmmnqmc/error.hpp"
#include "gmmnqmc/matrix.hpp"

namespace gmmnqmc::csv {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Cell = std::variant<std::string, double, long long>;

inline std::string to_cell(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  return std::to_string(std::get<long long>(c));
}

/// Row-at-a-time writer; the file is flushed and checked on close().
class Writer {
 public:
  Writer(const std::string& path, const std::vector<std::string>& header) : path_(path), out_(path) {
    if (!out_) throw RuntimeFailure("cannot open '" + path + "' for writing");
    write_fields(header);
  }

  void row(const std::vector<Cell>& cells) {
    std::vector<std::string> f;
    f.reserve(cells.size());
    for (const auto& c : cells) f.push_back(to_cell(c));
    write_fields(f);
  }

  void close() {
    out_.close();
    if (!out_) throw RuntimeFailure("failed writing '" + path_ + "'");
  }

 private:
  void write_fields(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
  }

  std::string path_;
  std::ofstream out_;
};

inline void write_matrix(const std::string& path, const Matrix& m, std::vector<std::string> header = {}) {
  if (header.empty()) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) header.push_back("u" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw ValidationError("csv: header width mismatch");
  Writer w(path, header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<Cell> cells;
    for (Eigen::Index j = 0; j < m.cols(); ++j) cells.emplace_back(m(i, j));
    w.row(cells);
  }
  w.close();
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw ValidationError("csv: no column named '" + name + "'");
  }
};

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv '" + path + "': missing header row");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split(line);
    if (f.size() != t.header.size()) {
      throw ValidationError("csv '" + path + "' line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " + std::to_string(f.size()));
    }
    t.rows.push_back(std::move(f));
  }
  return t;
}

inline double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ValidationError(where + ": '" + s + "' is not a number");
  }
  return v;
}

/// All-numeric table as a matrix (header dropped).
inline Matrix read_matrix(const std::string& path, std::vector<std::string>* header = nullptr) {
  const Table t = read_table(path);
  Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(
          t.rows[i][j], path + " row " + std::to_string(i + 1) + " column " + std::to_string(j + 1));
    }
  }
  if (header) *header = t.header;
  return m;
}

}  // namespace gmmnqmc::csv
