#include "efuf/io.hpp"

#include <fstream>
#include <sstream>

#include "efuf/error.hpp"

namespace efuf::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

JsonlFile read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  JsonlFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (file.records.empty() && file.meta.is_null() && j.is_object() &&
        j.contains(std::string(kMetaKey))) {
      file.meta = j.at(std::string(kMetaKey));
      continue;
    }
    file.records.push_back(std::move(j));
  }
  return file;
}

void write_jsonl(const std::filesystem::path& path, const Json& meta,
                 const std::vector<Json>& records) {
  auto out = open_out(path, std::ios::binary | std::ios::trunc);
  if (!meta.is_null()) out << Json{{std::string(kMetaKey), meta}}.dump() << '\n';
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void append_line(const std::filesystem::path& path, const Json& record) {
  auto out = open_out(path, std::ios::binary | std::ios::app);
  out << record.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& value) {
  write_text(path, value.dump(2) + "\n");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  auto out = open_out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace efuf::io
