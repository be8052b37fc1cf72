#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cotc {

using Json = nlohmann::json;

// Reads a line-delimited JSON file; calls fn(line_no, record) per record.
// Line numbers are 1-based. Blank lines are skipped.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const Json&)>& fn);

std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Writes one compact JSON object per line, UTF-8, LF newlines. The write is
// atomic: content goes to a temp file in the same directory, then rename.
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

// Atomic whole-file write (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);

}  // namespace cotc
