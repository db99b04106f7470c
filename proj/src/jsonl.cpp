#include "questlab/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "questlab/errors.hpp"

namespace questlab::jsonl {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise("io-error", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise("io-error", "cannot write " + path);
    out << content;
}

std::vector<json> parse(const std::string& content) {
    std::vector<json> records;
    std::size_t line_no = 0;
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            raise("parse-error", "invalid JSON at line " + std::to_string(line_no));
        records.push_back(std::move(j));
    }
    return records;
}

std::vector<json> read_file(const std::string& path) { return parse(read_text_file(path)); }

std::string serialize(const std::vector<json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

void write_file(const std::string& path, const std::vector<json>& records) {
    write_text_file(path, serialize(records));
}

}  // namespace questlab::jsonl
