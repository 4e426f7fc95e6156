#include "misanthrope/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "misanthrope/errors.hpp"

namespace misanthrope {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buffer, end);
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  if (text == "inf" || text == "infinity") return INFINITY;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<long long> parse_integer(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = trim(text.substr(start, comma - start));
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw InvalidArgument("expected key=value, got '" + std::string(item) + "'");
    }
    out.emplace_back(std::string(trim(item.substr(0, eq))), std::string(trim(item.substr(eq + 1))));
    start = comma + 1;
    if (comma == text.size()) break;
  }
  return out;
}

void write_csv_header(std::ostream& out, std::string_view schema, std::string_view columns) {
  out << "# schema: " << schema << " columns=" << columns << '\n' << columns << '\n';
}

std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path,
                                                    std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (!expected_header.empty() && view != expected_header) {
        throw InvalidArgument("'" + path.string() + "': expected header '" +
                              std::string(expected_header) + "', got '" + std::string(view) + "'");
      }
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = view.find(',', start);
      fields.emplace_back(trim(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

SupercriticalDensity::SupercriticalDensity(double requested, double rho_c)
    : Error("density " + format_double(requested) + " exceeds the critical density rho_c = " +
            format_double(rho_c)),
      requested_(requested),
      rho_c_(rho_c) {}

}  // namespace misanthrope
