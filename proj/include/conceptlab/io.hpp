#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace conceptlab {

std::string read_file(const std::string& path);

// Writes via a temporary sibling file and rename, so readers never observe
// a partially written file.
void write_file_atomic(const std::string& path, std::string_view contents);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

// Splits one CSV line. Quoted fields may contain commas and doubled quotes;
// embedded newlines are not supported.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Shortest round-trippable decimal text for a double.
std::string format_double(double v);

}  // namespace conceptlab
