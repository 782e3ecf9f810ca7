#include "spindyn/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace spindyn::csv {
namespace {

constexpr const char* kModule = "csv";

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool to_number(const std::string& cell, double& v) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, cell.data() + cell.size(), v);
  return res.ec == std::errc() && res.ptr == cell.data() + cell.size() && std::isfinite(v);
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void Writer::row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) throw Error(ErrorKind::kIo, kModule, "row width does not match the header");
  rows_.push_back(std::move(cells));
}

void Writer::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  row(std::move(cells));
}

std::string Writer::str() const {
  std::string out;
  for (const auto& [k, v] : meta_) out += "# " + k + ": " + v + "\n";
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void Writer::write_file(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, kModule, "cannot write '" + path + "'");
  f << str();
  if (!f) throw Error(ErrorKind::kIo, kModule, "write failed for '" + path + "'");
}

analysis::Trace parse_trace(std::string_view text, const std::string& source) {
  analysis::Trace t;
  std::vector<double> err;
  std::size_t width = 0;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || line[first] == '#') continue;
    const auto cells = split(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && to_number(cells[i], values[i]);
    const std::string where = source + ": line " + std::to_string(line_no);
    if (!numeric) {
      if (header_seen || width) throw Error(ErrorKind::kConfiguration, kModule, where + ": non-numeric row");
      header_seen = true;
      if (cells.size() < 2 || cells.size() > 3) {
        throw Error(ErrorKind::kConfiguration, kModule, where + ": expected columns x,y[,y_err]");
      }
      width = cells.size();
      continue;
    }
    if (!width) {
      if (cells.size() < 2 || cells.size() > 3) {
        throw Error(ErrorKind::kConfiguration, kModule, where + ": expected columns x,y[,y_err]");
      }
      width = cells.size();
    }
    if (cells.size() != width) throw Error(ErrorKind::kConfiguration, kModule, where + ": wrong number of columns");
    t.x.push_back(values[0]);
    t.y.push_back(values[1]);
    if (width == 3) err.push_back(values[2]);
  }
  if (t.x.empty()) throw Error(ErrorKind::kConfiguration, kModule, source + ": no data rows");
  if (width == 3) t.y_err = std::move(err);
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfiguration, kModule, source + ": " + e.what());
  }
  return t;
}

analysis::Trace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, kModule, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str(), path);
}

}  // namespace spindyn::csv
