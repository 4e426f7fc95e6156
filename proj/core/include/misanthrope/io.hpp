#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace misanthrope {

// Shortest round-trip decimal form, locale independent ("inf", "-inf", "nan").
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string_view trim(std::string_view text);

// Splits "a=1,b=2" into ordered pairs; throws InvalidArgument on a malformed entry.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

// Writes "# schema: <name> columns=<columns>" followed by the column header row.
void write_csv_header(std::ostream& out, std::string_view schema, std::string_view columns);

// Reads a CSV file, skipping '#' comment lines and blank lines. The first
// remaining row is the header; it is checked against `expected_header` when given.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path,
                                                    std::string_view expected_header = {});

}  // namespace misanthrope
