#pragma once

// CSV export/import: a header row, `#`-prefixed `key: value` metadata lines
// above it, shortest round-trip number formatting.

#include "spindyn/analysis.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spindyn::csv {

std::string format_number(double v);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header) : header_(std::move(header)) {}

  void meta(std::string key, std::string value) { meta_.emplace_back(std::move(key), std::move(value)); }
  void row(std::vector<std::string> cells);
  void row(const std::vector<double>& values);

  std::size_t rows() const { return rows_.size(); }
  std::string str() const;
  void write_file(const std::string& path) const;  // Error(kIo) on failure

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// x, y and an optional y_err column. A first row that does not parse as
// numbers is taken as the header. Malformed or empty input -> Error(kConfiguration).
analysis::Trace parse_trace(std::string_view text, const std::string& source = "<inline>");
analysis::Trace read_trace(const std::string& path);

}  // namespace spindyn::csv
