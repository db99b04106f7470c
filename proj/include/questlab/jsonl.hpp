#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace questlab::jsonl {

using json = nlohmann::json;

// Reads a JSON Lines file; blank lines are skipped, a malformed line raises
// Error("parse-error") with the line number.
std::vector<json> read_file(const std::string& path);

std::vector<json> parse(const std::string& content);

void write_file(const std::string& path, const std::vector<json>& records);

std::string serialize(const std::vector<json>& records);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace questlab::jsonl
