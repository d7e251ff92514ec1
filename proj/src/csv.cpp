#include "auditalloc/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <istream>

#include "auditalloc/common.hpp"

namespace auditalloc::csv {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.pop_back();
    std::size_t lead = 0;
    while (lead < f.size() && f[lead] == ' ') ++lead;
    f.erase(0, lead);
  }
  return out;
}

std::optional<double> parse_double(std::string_view field) {
  if (field.empty()) return std::nullopt;
  if (field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_double(double x) {
  if (x == 0.0) return "0";  // folds -0
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf.data(), ptr);
}

std::string format_optional(const std::optional<double>& x) {
  return x ? format_double(*x) : std::string(kUndefined);
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw ParseError(0, std::string(name), "missing column");
}

double Table::number(std::size_t row, std::string_view name) const {
  const auto c = column(name);
  const auto v = parse_double(rows.at(row)[c]);
  if (!v) throw ParseError(row + 1, std::string(name), "non-numeric field \"" + rows[row][c] + "\"");
  return *v;
}

std::optional<double> Table::optional_number(std::size_t row, std::string_view name) const {
  const auto c = column(name);
  if (rows.at(row)[c] == kUndefined) return std::nullopt;
  return number(row, name);
}

const std::string& Table::text(std::size_t row, std::string_view name) const {
  return rows.at(row)[column(name)];
}

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "", "missing header");
  t.header = split_line(line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto fields = split_line(line);
    if (fields.size() != t.header.size())
      throw ParseError(row, t.header.back(),
                       "expected " + std::to_string(t.header.size()) + " fields");
    t.rows.push_back(std::move(fields));
  }
  return t;
}

}  // namespace auditalloc::csv
