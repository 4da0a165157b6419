#pragma once

#include <string>
#include <vector>

namespace tsdq {

/// Minimal RFC-style CSV: header row, fields quoted when they contain
/// commas, quotes or newlines; embedded quotes doubled.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row);
  void write(const std::string& path) const;
  std::string to_string() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  ///< -1 when absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

/// Shortest round-trip decimal representation ("%.17g") used everywhere a
/// float lands in a CSV, so reruns are byte-comparable.
std::string format_double(double v);

}  // namespace tsdq
