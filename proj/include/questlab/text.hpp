#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace questlab::text {

// Canonical text normalization used for every name/entity/string comparison in
// the project: UTF-8 decode, canonical composition for the Latin combining-mark
// subset, case folding (ASCII, Latin-1, Latin Extended-A), and whitespace-run
// collapse with trimming. Full Unicode tables are deliberately out of scope.
std::string normalize(std::string_view s);

// Normalized alphanumeric tokens (non-alphanumeric ASCII acts as a separator;
// non-ASCII codepoints count as letters).
std::vector<std::string> tokens(std::string_view s);

// Unique-token overlap |set(a) ∩ set(b)|.
std::size_t overlap(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Jaccard similarity over unique token sets; 1.0 when both sides are empty.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// True when normalize(needle) occurs as a substring of normalize(haystack).
// Empty needles never match.
bool contains_norm(std::string_view haystack, std::string_view needle);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Shortest round-trip decimal rendering (std::to_chars), used everywhere a
// double is written to CSV/JSON-adjacent text so artifacts hash identically.
std::string format_double(double v);

// FNV-1a 64-bit hex digest, the project's content-fingerprint primitive.
std::string fnv1a_hex(std::string_view data);

}  // namespace questlab::text
