#pragma once

// Minimal CSV support for the numeric tables this project reads and writes:
// one header row naming the columns, then rows of decimal numbers.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stagerl/errors.hpp"

namespace stagerl {

// Shortest round-trip decimal rendering; identical input doubles always
// produce identical text, which keeps generated files byte-reproducible.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw InvalidInput("csv: missing required column '" + name + "'");
  }
};

namespace csv_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace csv_detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("csv: cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (csv_detail::trim(line).empty()) continue;
    auto cells = csv_detail::split_line(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      throw InvalidInput("csv: row " + std::to_string(lineno) + " in '" + path + "' has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(t.header.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        std::size_t pos = 0;
        row[i] = std::stod(cells[i], &pos);
        if (pos != cells[i].size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw InvalidInput("csv: non-numeric value '" + cells[i] + "' at row " +
                           std::to_string(lineno) + ", column '" + t.header[i] + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw InvalidInput("csv: '" + path + "' is empty");
  return t;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("csv: cannot write '" + path + "'");
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "");
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << format_double(row[i]) << (i + 1 < row.size() ? "," : "");
    out << '\n';
  }
}

}  // namespace stagerl
