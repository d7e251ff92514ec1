#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace auditalloc::csv {

// Written for undefined rates. Readers map it back to std::nullopt.
inline constexpr std::string_view kUndefined = "NA";

// Fields are never quoted by our writers; embedded commas are rejected by
// the labels that could carry them.
std::vector<std::string> split_line(std::string_view line);

std::optional<double> parse_double(std::string_view field);

// Shortest representation that round-trips exactly.
std::string format_double(double x);
std::string format_optional(const std::optional<double>& x);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of `name` in the header; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
  std::optional<double> optional_number(std::size_t row, std::string_view name) const;
  const std::string& text(std::size_t row, std::string_view name) const;
};

// Reads a whole table, checking that every row has the header's width.
Table read_table(std::istream& in);

}  // namespace auditalloc::csv
