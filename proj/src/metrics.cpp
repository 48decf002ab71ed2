#include "fdfo/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdfo {

int Table::col_index(const std::string& name) const {
  for (size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> Table::column(const std::string& name) const {
  int idx = col_index(name);
  if (idx < 0) throw std::runtime_error("no such column: " + name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

namespace {

std::string format_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_table(const std::string& path, const Table& t) {
  CsvWriter w(path, t.cols);
  for (const auto& r : t.rows) w.append(r);
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv: " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.cols.push_back(cell);
  }
  if (t.cols.empty()) throw std::runtime_error("csv header has no columns: " + path);
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw std::runtime_error("non-numeric cell '" + cell + "' at " + path +
                                 ":" + std::to_string(lineno));
      }
      row.push_back(v);
    }
    if (row.size() != t.cols.size()) {
      throw std::runtime_error("ragged csv row at " + path + ":" +
                               std::to_string(lineno));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& cols)
    : path_(path), ncols_(cols.size()) {
  if (cols.empty()) throw std::runtime_error("csv writer needs columns: " + path);
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open csv for writing: " + path);
  f_ = f;
  std::string header;
  for (size_t i = 0; i < cols.size(); ++i) {
    if (i) header += ',';
    header += cols[i];
  }
  header += '\n';
  if (std::fwrite(header.data(), 1, header.size(), f) != header.size() ||
      std::fflush(f) != 0) {
    throw std::runtime_error("csv header write failed: " + path);
  }
}

CsvWriter::~CsvWriter() {
  if (f_) std::fclose(static_cast<FILE*>(f_));
}

void CsvWriter::append(const std::vector<double>& row) {
  if (row.size() != ncols_) {
    throw std::runtime_error("csv row width mismatch: " + path_);
  }
  std::string line;
  for (size_t i = 0; i < row.size(); ++i) {
    if (i) line += ',';
    line += format_cell(row[i]);
  }
  line += '\n';
  FILE* f = static_cast<FILE*>(f_);
  if (std::fwrite(line.data(), 1, line.size(), f) != line.size() ||
      std::fflush(f) != 0) {
    throw std::runtime_error("csv row write failed: " + path_);
  }
}

}  // namespace fdfo
