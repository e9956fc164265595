#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace facplace::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number of the row's first line
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of a header column; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

// Parses RFC 4180 style CSV (double-quoted fields, "" escapes, embedded
// newlines inside quotes). `source` names the input in error messages.
Table parse(std::string_view text, std::string_view source);

Table read_file(const std::filesystem::path& path);

// Verifies the header is exactly `expected` (order and names).
void require_header(const Table& table, const std::vector<std::string>& expected,
                    std::string_view source);

std::string escape(std::string_view field);

std::string join_row(const std::vector<std::string>& fields);

std::vector<std::string> split(std::string_view text, char sep);

std::string trim(std::string_view text);

}  // namespace facplace::csv
