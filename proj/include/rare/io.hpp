#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace rare {

/// A CSV cell: integers print as-is, reals with 17 significant digits.
using CsvCell = std::variant<std::int64_t, double, std::string>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<CsvCell>> rows;
};

std::string format_real(double value);
std::string format_cell(const CsvCell& cell);

/// Writes `contents` to `path` via a temporary file and rename. Errors carry the path.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

void write_jsonl(const std::vector<nlohmann::ordered_json>& records, const std::filesystem::path& path);
void write_json(const nlohmann::ordered_json& value, const std::filesystem::path& path);
void write_csv(const CsvTable& table, const std::filesystem::path& path);

/// Parses a CSV written by write_csv back into string cells.
CsvTable read_csv(const std::filesystem::path& path);

std::string to_csv(const CsvTable& table);

}  // namespace rare
