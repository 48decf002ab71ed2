#pragma once
// Minimal numeric CSV tables: named columns, double cells, round-trippable
// at %.10g precision.

#include <string>
#include <vector>

namespace fdfo {

struct Table {
  std::vector<std::string> cols;
  std::vector<std::vector<double>> rows;  // each row matches cols.size()

  int col_index(const std::string& name) const;  // -1 if absent
  std::vector<double> column(const std::string& name) const;  // throws if absent
};

// Overwrites path with header + rows. Throws std::runtime_error on I/O errors.
void write_table(const std::string& path, const Table& t);

// Parses header + numeric rows. Throws std::runtime_error on I/O or malformed
// content (non-numeric cell, ragged row).
Table read_table(const std::string& path);

// Incremental writer: header on open, one row per append, flushed each row so
// partial runs leave a readable file.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& cols);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void append(const std::vector<double>& row);

 private:
  std::string path_;
  size_t ncols_;
  void* f_;  // FILE*
};

}  // namespace fdfo
