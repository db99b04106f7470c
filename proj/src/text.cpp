#include "questlab/text.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <set>
#include <utility>

namespace questlab::text {
namespace {

// --- minimal UTF-8 codec ---------------------------------------------------

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::vector<std::uint32_t> decode_utf8(std::string_view s) {
    std::vector<std::uint32_t> cps;
    cps.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0xFFFD;
        std::size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
            cp = (static_cast<std::uint32_t>(c & 0x1F) << 6) |
                 (static_cast<std::uint32_t>(s[i + 1]) & 0x3F);
            len = 2;
        } else if ((c >> 4) == 0xE && i + 2 < s.size()) {
            cp = (static_cast<std::uint32_t>(c & 0x0F) << 12) |
                 ((static_cast<std::uint32_t>(s[i + 1]) & 0x3F) << 6) |
                 (static_cast<std::uint32_t>(s[i + 2]) & 0x3F);
            len = 3;
        } else if ((c >> 3) == 0x1E && i + 3 < s.size()) {
            cp = (static_cast<std::uint32_t>(c & 0x07) << 18) |
                 ((static_cast<std::uint32_t>(s[i + 1]) & 0x3F) << 12) |
                 ((static_cast<std::uint32_t>(s[i + 2]) & 0x3F) << 6) |
                 (static_cast<std::uint32_t>(s[i + 3]) & 0x3F);
            len = 4;
        }
        cps.push_back(cp);
        i += len;
    }
    return cps;
}

// --- Latin-subset canonical composition -------------------------------------

// (base, combining mark) -> precomposed codepoint. Covers the combining marks
// that occur in Latin-script corpora: grave 0300, acute 0301, circumflex 0302,
// tilde 0303, diaeresis 0308, ring 030A, cedilla 0327.
std::uint32_t compose(std::uint32_t base, std::uint32_t mark) {
    struct Row { std::uint32_t base, mark, out; };
    static constexpr std::array<Row, 58> table = {{
        {'A', 0x300, 0xC0}, {'A', 0x301, 0xC1}, {'A', 0x302, 0xC2}, {'A', 0x303, 0xC3},
        {'A', 0x308, 0xC4}, {'A', 0x30A, 0xC5}, {'C', 0x327, 0xC7}, {'E', 0x300, 0xC8},
        {'E', 0x301, 0xC9}, {'E', 0x302, 0xCA}, {'E', 0x308, 0xCB}, {'I', 0x300, 0xCC},
        {'I', 0x301, 0xCD}, {'I', 0x302, 0xCE}, {'I', 0x308, 0xCF}, {'N', 0x303, 0xD1},
        {'O', 0x300, 0xD2}, {'O', 0x301, 0xD3}, {'O', 0x302, 0xD4}, {'O', 0x303, 0xD5},
        {'O', 0x308, 0xD6}, {'U', 0x300, 0xD9}, {'U', 0x301, 0xDA}, {'U', 0x302, 0xDB},
        {'U', 0x308, 0xDC}, {'Y', 0x301, 0xDD}, {'a', 0x300, 0xE0}, {'a', 0x301, 0xE1},
        {'a', 0x302, 0xE2}, {'a', 0x303, 0xE3}, {'a', 0x308, 0xE4}, {'a', 0x30A, 0xE5},
        {'c', 0x327, 0xE7}, {'e', 0x300, 0xE8}, {'e', 0x301, 0xE9}, {'e', 0x302, 0xEA},
        {'e', 0x308, 0xEB}, {'i', 0x300, 0xEC}, {'i', 0x301, 0xED}, {'i', 0x302, 0xEE},
        {'i', 0x308, 0xEF}, {'n', 0x303, 0xF1}, {'o', 0x300, 0xF2}, {'o', 0x301, 0xF3},
        {'o', 0x302, 0xF4}, {'o', 0x303, 0xF5}, {'o', 0x308, 0xF6}, {'u', 0x300, 0xF9},
        {'u', 0x301, 0xFA}, {'u', 0x302, 0xFB}, {'u', 0x308, 0xFC}, {'y', 0x301, 0xFD},
        {'y', 0x308, 0xFF}, {'S', 0x30C, 0x160}, {'s', 0x30C, 0x161}, {'Z', 0x30C, 0x17D},
        {'z', 0x30C, 0x17E}, {'C', 0x30C, 0x10C},
    }};
    for (const auto& row : table)
        if (row.base == base && row.mark == mark) return row.out;
    return 0;
}

std::uint32_t fold_case(std::uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    // Latin-1 supplement uppercase block, excluding the multiplication sign.
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    // Latin Extended-A: even/odd case pairs, with the handful of exceptions
    // that do not matter for this corpus treated by the same rule.
    if (cp >= 0x100 && cp < 0x178 && (cp % 2) == 0) return cp + 1;
    if (cp == 0x178) return 0xFF;  // Ÿ
    if (cp >= 0x179 && cp <= 0x17D && (cp % 2) == 1) return cp + 1;
    return cp;
}

bool is_space_cp(std::uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
           cp == '\v' || cp == 0xA0 || cp == 0x2007 || cp == 0x202F || cp == 0x3000;
}

}  // namespace

std::string normalize(std::string_view s) {
    std::vector<std::uint32_t> cps = decode_utf8(s);

    // Compose base+mark pairs (one pass is enough for single-mark sequences).
    std::vector<std::uint32_t> composed;
    composed.reserve(cps.size());
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (!composed.empty() && cps[i] >= 0x300 && cps[i] <= 0x36F) {
            if (std::uint32_t pre = compose(composed.back(), cps[i]); pre != 0) {
                composed.back() = pre;
                continue;
            }
        }
        composed.push_back(cps[i]);
    }

    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    bool seen_content = false;
    for (std::uint32_t cp : composed) {
        if (is_space_cp(cp)) {
            pending_space = seen_content;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        append_utf8(out, fold_case(cp));
        seen_content = true;
    }
    return out;
}

std::vector<std::string> tokens(std::string_view s) {
    std::string norm = normalize(s);
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : norm) {
        bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
        if (keep) {
            cur.push_back(static_cast<char>(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::size_t overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    std::size_t n = 0;
    for (const auto& t : sa) n += sb.count(t);
    return n;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool contains_norm(std::string_view haystack, std::string_view needle) {
    std::string n = normalize(needle);
    if (n.empty()) return false;
    return normalize(haystack).find(n) != std::string::npos;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace questlab::text
