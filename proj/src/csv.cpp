#include "ddmpc/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ddmpc/errors.hpp"

namespace ddmpc::csv {

std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_cell(const std::string& cell, const char* where) {
  // Trim surrounding whitespace.
  size_t b = cell.find_first_not_of(" \t\r");
  if (b == std::string::npos) return std::nullopt;
  size_t e = cell.find_last_not_of(" \t\r");
  std::string s = cell.substr(b, e - b + 1);
  if (s.empty()) return std::nullopt;
  if (s == "nan" || s == "-nan") return std::nan("");
  double value = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(std::string(where) + ": bad numeric cell '" + s + "'");
  }
  return value;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read " + path);
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write " + path);
  }
  out << content;
  if (!out) {
    throw ConfigError("write failed for " + path);
  }
}

}  // namespace ddmpc::csv
