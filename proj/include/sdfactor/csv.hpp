#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdfactor/errors.hpp"
#include "sdfactor/types.hpp"

namespace sdfactor {

// Plain-text table: one label per column, row-major numeric body. Used for
// estimate tables, KDE grids, and comparison output where PanelData semantics
// (dates, standardization) do not apply.
struct CsvTable {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, long row, long col) {
  const std::string cell = trim(raw);
  if (cell.empty()) throw CsvError("missing cell", row, col);
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw CsvError("cell is not numeric: '" + cell + "'", row, col);
  return value;
}

// ISO-8601 calendar date, optionally extended with a time part which is kept verbatim.
inline bool plausible_iso_date(const std::string& s) {
  if (s.size() < 10) return false;
  for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return false;
  return s[4] == '-' && s[7] == '-';
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Write-then-rename so readers never observe a half-written file.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.flush()) throw Error("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, target);
}

}  // namespace detail

inline PanelData load_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);

  PanelData panel;
  std::vector<std::vector<double>> rows;
  bool has_dates = false;
  long line_no = 0;
  bool header_seen = false;
  std::string line;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto cells = detail::split_csv_line(line);

    if (!header_seen) {
      header_seen = true;
      std::size_t start = 0;
      if (!cells.empty() && detail::trim(cells[0]) == "date") {
        has_dates = true;
        start = 1;
      }
      for (std::size_t j = start; j < cells.size(); ++j) {
        const std::string label = detail::trim(cells[j]);
        if (label.empty()) throw CsvError("empty series label", line_no, static_cast<long>(j + 1));
        panel.labels.push_back(label);
      }
      if (panel.labels.empty()) throw CsvError("header has no series labels", line_no, 1);
      continue;
    }

    const std::size_t expected = panel.labels.size() + (has_dates ? 1 : 0);
    if (cells.size() != expected)
      throw CsvError("expected " + std::to_string(expected) + " cells, found " +
                         std::to_string(cells.size()),
                     line_no, static_cast<long>(cells.size() + 1));

    std::size_t start = 0;
    if (has_dates) {
      const std::string date = detail::trim(cells[0]);
      if (!detail::plausible_iso_date(date))
        throw CsvError("date is not ISO-8601 (YYYY-MM-DD): '" + date + "'", line_no, 1);
      panel.dates.push_back(date);
      start = 1;
    }
    std::vector<double> row;
    row.reserve(panel.labels.size());
    for (std::size_t j = start; j < cells.size(); ++j)
      row.push_back(detail::parse_cell(cells[j], line_no, static_cast<long>(j + 1)));
    rows.push_back(std::move(row));
  }

  if (!header_seen) throw CsvError("file has no header row", 1, 1);
  if (rows.size() < 2) throw CsvError("panel needs at least two data rows", line_no, 1);

  panel.y.resize(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(panel.labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      panel.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  panel.validate();
  return panel;
}

// Comment lines carry provenance (seed, config hash); each is prefixed with '#'.
inline void write_panel_csv(const std::string& path, const PanelData& panel,
                            const std::vector<std::string>& comments = {}) {
  panel.validate();
  std::ostringstream out;
  for (const auto& c : comments) out << "# " << c << "\n";
  const bool has_dates = !panel.dates.empty();
  if (has_dates) out << "date";
  for (std::size_t j = 0; j < panel.labels.size(); ++j) {
    if (has_dates || j > 0) out << ",";
    out << panel.labels[j];
  }
  out << "\n";
  for (Eigen::Index i = 0; i < panel.T(); ++i) {
    if (has_dates) out << panel.dates[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < panel.n(); ++j) {
      if (has_dates || j > 0) out << ",";
      out << detail::format_double(panel.y(i, j));
    }
    out << "\n";
  }
  detail::atomic_write(path, out.str());
}

inline void write_table_csv(const std::string& path, const CsvTable& table,
                            const std::vector<std::string>& comments = {}) {
  if (static_cast<Eigen::Index>(table.labels.size()) != table.values.cols())
    throw DimensionMismatch("one label per table column required");
  std::ostringstream out;
  for (const auto& c : comments) out << "# " << c << "\n";
  for (std::size_t j = 0; j < table.labels.size(); ++j) {
    if (j > 0) out << ",";
    out << table.labels[j];
  }
  out << "\n";
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      if (j > 0) out << ",";
      out << detail::format_double(table.values(i, j));
    }
    out << "\n";
  }
  detail::atomic_write(path, out.str());
}

inline CsvTable load_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  CsvTable table;
  std::vector<std::vector<double>> rows;
  long line_no = 0;
  bool header_seen = false;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      for (std::size_t j = 0; j < cells.size(); ++j) {
        const std::string label = detail::trim(cells[j]);
        if (label.empty()) throw CsvError("empty column label", line_no, static_cast<long>(j + 1));
        table.labels.push_back(label);
      }
      continue;
    }
    if (cells.size() != table.labels.size())
      throw CsvError("expected " + std::to_string(table.labels.size()) + " cells, found " +
                         std::to_string(cells.size()),
                     line_no, static_cast<long>(cells.size() + 1));
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j)
      row.push_back(detail::parse_cell(cells[j], line_no, static_cast<long>(j + 1)));
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw CsvError("file has no header row", 1, 1);
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

}  // namespace sdfactor
