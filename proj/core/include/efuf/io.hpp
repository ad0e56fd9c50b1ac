#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace efuf::io {

using Json = nlohmann::json;

/// Key under which the leading provenance record of an artifact lives.
inline constexpr std::string_view kMetaKey = "_meta";

struct JsonlFile {
  Json meta;                  // null when the file has no header record
  std::vector<Json> records;
};

/// Reads line-delimited JSON. A first line carrying `_meta` is split off.
/// Throws IoError on unreadable files and malformed lines.
JsonlFile read_jsonl(const std::filesystem::path& path);

/// Writes `meta` (if not null) as the header line, then one record per line.
void write_jsonl(const std::filesystem::path& path, const Json& meta,
                 const std::vector<Json>& records);

/// Appends a single compact line; creates the file if needed.
void append_line(const std::filesystem::path& path, const Json& record);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace efuf::io
