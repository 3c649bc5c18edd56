#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace biasaudit::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

/// Writes via a sibling temp file and rename so readers never observe a
/// partially written artifact.
void write_file_atomic(const fs::path& path, std::string_view contents);

/// Parses a line-delimited JSON file. Blank lines are skipped; a malformed
/// line raises a Parse error naming the 1-based line number.
std::vector<nlohmann::json> read_jsonl(const fs::path& path);
void write_jsonl_atomic(const fs::path& path, const std::vector<nlohmann::json>& records);

/// Non-empty, non-comment ('#') lines with trailing CR/whitespace removed.
std::vector<std::string> read_data_lines(const fs::path& path);

/// Fixed 6-decimal rendering used by every CSV and report table. Negative
/// zero is printed as "0.000000".
std::string fixed6(double value);

/// RFC 4180 quoting when the field contains a comma, quote or newline.
std::string csv_field(std::string_view field);

/// Parses a CSV file written by this toolkit: '#' lines are skipped, the
/// header row is returned first, RFC 4180 quoting is honoured.
std::vector<std::vector<std::string>> read_csv(const fs::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace biasaudit::io
