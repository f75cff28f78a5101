#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace fbrank {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && is_space(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

/// Number of UTF-8 code points in `s`. Invalid sequences count one per byte.
inline std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0U) != 0x80U) {
            ++n;
        }
    }
    return n;
}

/// Byte offset reached after advancing `count` code points from `pos`.
inline std::size_t utf8_advance(std::string_view s, std::size_t pos, std::size_t count) {
    while (pos < s.size() && count > 0) {
        ++pos;
        while (pos < s.size() && (static_cast<unsigned char>(s[pos]) & 0xC0U) == 0x80U) {
            ++pos;
        }
        --count;
    }
    return pos;
}

/// Lowercased alphanumeric runs. Bytes >= 0x80 are kept inside tokens so
/// multi-byte words survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : text) {
        auto c = static_cast<unsigned char>(raw);
        bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : raw);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

inline const std::unordered_set<std::string>& stop_words() {
    static const std::unordered_set<std::string> words = {
        "a",      "about",   "above",  "after",   "again",  "against", "all",     "am",
        "an",     "and",     "any",    "are",     "as",     "at",      "be",      "because",
        "been",   "before",  "being",  "below",   "between", "both",   "but",     "by",
        "can",    "could",   "did",    "do",      "does",   "doing",   "down",    "during",
        "each",   "few",     "for",    "from",    "further", "had",    "has",     "have",
        "having", "he",      "her",    "here",    "hers",   "herself", "him",     "himself",
        "his",    "how",     "i",      "if",      "in",     "into",    "is",      "it",
        "its",    "itself",  "just",   "me",      "more",   "most",    "my",      "myself",
        "no",     "nor",     "not",    "now",     "of",     "off",     "on",      "once",
        "only",   "or",      "other",  "our",     "ours",   "ourselves", "out",   "over",
        "own",    "same",    "she",    "should",  "so",     "some",    "such",    "than",
        "that",   "the",     "their",  "theirs",  "them",   "themselves", "then", "there",
        "these",  "they",    "this",   "those",   "through", "to",     "too",     "under",
        "until",  "up",      "very",   "was",     "we",     "were",    "what",    "when",
        "where",  "which",   "while",  "who",     "whom",   "why",     "will",    "with",
        "would",  "you",     "your",   "yours",   "yourself", "yourselves",
    };
    return words;
}

inline bool is_stop_word(std::string_view token) {
    return stop_words().count(std::string(token)) != 0;
}

/// Tokens with stop words removed; order and duplicates preserved.
inline std::vector<std::string> content_tokens(std::string_view text) {
    auto tokens = tokenize(text);
    std::erase_if(tokens, [](const std::string& t) { return is_stop_word(t); });
    return tokens;
}

/// Lowercased, stop-word-filtered, deduplicated tokens in first-occurrence order.
inline std::vector<std::string> extract_keywords(std::string_view text) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : content_tokens(text)) {
        if (seen.insert(t).second) {
            out.push_back(std::move(t));
        }
    }
    return out;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xFU];
        v >>= 4;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i != 0) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

}  // namespace fbrank
