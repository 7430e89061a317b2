#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ddmpc::csv {

// Shortest decimal text that round-trips the double exactly.
std::string format(double v);

// Parses a cell; empty cells map to nullopt. Throws ConfigError on junk,
// naming `where` in the message.
std::optional<double> parse_cell(const std::string& cell,
                                 const char* where = "value");

std::vector<std::string> split(const std::string& line);

// Reads all non-empty lines. Throws ConfigError when the file cannot be read.
std::vector<std::string> read_lines(const std::string& path);

void write_file(const std::string& path, const std::string& content);

}  // namespace ddmpc::csv
