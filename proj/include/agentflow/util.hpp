#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace agentflow {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Lowercase hex SHA-256. All digests in manifests, checkpoints and event
// logs use this function.
std::string sha256_hex(std::string_view data);

// Reads a whole file; throws StorageError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling file, fsyncs it, then renames over the
// target so readers never observe a partial file. Throws StorageError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Parses JSON text, translating parse errors into SyntaxError with the
// 1-based line/column of the offending byte. Duplicate object keys are
// rejected as syntax errors.
ordered_json parse_json_document(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Shortens long text for embedding inside messages; appends a marker when cut.
std::string truncate_text(std::string_view s, std::size_t max_chars);

}  // namespace agentflow
