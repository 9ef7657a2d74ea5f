#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lrsl::util {

/// Shortest-safe round-trip text for a double: 17 significant digits.
std::string format_real(double value);
double parse_real(std::string_view text);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

using CsvRow = std::vector<std::string>;

std::string to_csv(const CsvRow& header, const std::vector<CsvRow>& rows);
/// Header row first. Fields are plain (no quoting); used for our own output.
std::vector<CsvRow> parse_csv(std::string_view text);

} // namespace lrsl::util
