#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mvhan {

// Doubles in data files are printed with 17 significant digits, which
// round-trips IEEE 754 binary64 exactly.
std::string format_double(double v);
// Shortest representation that still round-trips exactly (checkpoints, logs).
std::string format_double_short(double v);
double parse_double(std::string_view s, const std::string& context);
uint64_t parse_u64(std::string_view s, const std::string& context);
int64_t parse_i64(std::string_view s, const std::string& context);

std::vector<std::string> split(std::string_view line, char sep);
std::string strip(std::string_view s);

std::string read_file(const std::string& path);
// Writes to <path>.tmp then renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace mvhan
