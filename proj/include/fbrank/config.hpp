#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fbrank/embedding.hpp"
#include "fbrank/error.hpp"
#include "fbrank/index.hpp"
#include "fbrank/indicators.hpp"
#include "fbrank/ranker.hpp"
#include "fbrank/text.hpp"

namespace fbrank {

/// Every tunable of the engine. Loaded from a `key = value` file; relative
/// paths resolve against the file's directory.
struct EngineConfig {
    std::filesystem::path corpus;
    std::filesystem::path indicator_store;
    std::filesystem::path feedback_log;
    std::filesystem::path index_dir;
    std::string embedding_provider = "hashing";
    std::size_t embedding_dim = 256;
    std::uint64_t embedding_seed = 0;
    std::optional<std::filesystem::path> embedding_cache;
    std::string synthetic_provider = "template";  // "template" or "none"
    std::size_t queries_per_chunk = 5;
    std::size_t max_feedback_per_doc = 6;
    std::size_t max_chunk_size = 400;
    Bm25Params bm25;
    RankerConfig ranker;

    void validate() const {
        if (embedding_provider != "hashing") {
            throw ValidationError("unknown embedding_provider '" + embedding_provider + "'");
        }
        if (embedding_dim == 0) {
            throw ValidationError("embedding_dim must be positive");
        }
        if (synthetic_provider != "template" && synthetic_provider != "none") {
            throw ValidationError("unknown synthetic_provider '" + synthetic_provider + "'");
        }
        if (queries_per_chunk == 0 || max_feedback_per_doc == 0 || max_chunk_size == 0) {
            throw ValidationError("queries_per_chunk, max_feedback_per_doc and max_chunk_size must be positive");
        }
        if (!(bm25.k1 >= 0.0) || !(bm25.b >= 0.0 && bm25.b <= 1.0)) {
            throw ValidationError("bm25_k1 must be >= 0 and bm25_b in [0, 1]");
        }
        for (const auto& f : ranker.dense_fields) {
            static const std::vector<std::string_view> known = {field::title, field::content, field::keywords,
                                                                field::title_embedding, field::content_embedding};
            if (std::find(known.begin(), known.end(), f) == known.end()) {
                throw ValidationError("'" + f + "' is not a dense field");
            }
        }
        ranker.validate();
    }

    std::shared_ptr<const EmbeddingProvider> make_embedding_provider() const {
        std::shared_ptr<const EmbeddingProvider> p = std::make_shared<HashingEmbeddingProvider>(embedding_dim, embedding_seed);
        if (embedding_cache) {
            p = std::make_shared<CachedEmbeddingProvider>(p, *embedding_cache);
        }
        return p;
    }

    std::unique_ptr<SyntheticQueryProvider> make_synthetic_provider() const {
        if (synthetic_provider == "none") {
            return nullptr;
        }
        return std::make_unique<TemplateQueryProvider>(queries_per_chunk);
    }
};

namespace detail {

inline std::string require_value(std::string_view key, std::string_view value) {
    if (value.empty()) {
        throw ValidationError("config key '" + std::string(key) + "' has an empty value");
    }
    return std::string(value);
}

inline std::size_t parse_size(std::string_view key, std::string_view v) {
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
        if (!v.empty() && v.front() == '-') {
            throw std::invalid_argument("negative");
        }
        n = std::stoull(std::string(v), &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw ValidationError("config key '" + std::string(key) + "' expects a non-negative integer, got '" +
                              std::string(v) + "'");
    }
    return static_cast<std::size_t>(n);
}

inline double parse_real(std::string_view key, std::string_view v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(std::string(v), &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(d)) {
        throw ValidationError("config key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    }
    return d;
}

inline std::vector<std::string> parse_list(std::string_view v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        auto end = v.find(',', start);
        auto item = trim(v.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        if (!item.empty()) {
            out.emplace_back(item);
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are errors.
inline void apply_setting(EngineConfig& c, std::string_view key, std::string_view value,
                          const std::filesystem::path& base_dir = {}) {
    auto path = [&](std::string_view v) {
        std::filesystem::path p(detail::require_value(key, v));
        return p.is_absolute() ? p : base_dir / p;
    };
    using detail::parse_real;
    using detail::parse_size;
    if (key == "corpus") {
        c.corpus = path(value);
    } else if (key == "indicator_store") {
        c.indicator_store = path(value);
    } else if (key == "feedback_log") {
        c.feedback_log = path(value);
    } else if (key == "index_dir") {
        c.index_dir = path(value);
    } else if (key == "embedding_provider") {
        c.embedding_provider = detail::require_value(key, value);
    } else if (key == "embedding_dim") {
        c.embedding_dim = parse_size(key, value);
    } else if (key == "embedding_seed") {
        c.embedding_seed = parse_size(key, value);
    } else if (key == "embedding_cache") {
        if (value.empty()) {
            c.embedding_cache.reset();
        } else {
            c.embedding_cache = path(value);
        }
    } else if (key == "synthetic_provider") {
        c.synthetic_provider = detail::require_value(key, value);
    } else if (key == "queries_per_chunk") {
        c.queries_per_chunk = parse_size(key, value);
    } else if (key == "max_feedback_per_doc") {
        c.max_feedback_per_doc = parse_size(key, value);
    } else if (key == "max_chunk_size") {
        c.max_chunk_size = parse_size(key, value);
    } else if (key == "bm25_k1") {
        c.bm25.k1 = parse_real(key, value);
    } else if (key == "bm25_b") {
        c.bm25.b = parse_real(key, value);
    } else if (key == "threshold") {
        c.ranker.threshold = parse_real(key, value);
    } else if (key == "synthetic_threshold") {
        if (value.empty()) {
            c.ranker.synthetic_threshold.reset();
        } else {
            c.ranker.synthetic_threshold = parse_real(key, value);
        }
    } else if (key == "top_k") {
        c.ranker.top_k = parse_size(key, value);
    } else if (key == "group_truncation") {
        c.ranker.group_truncation = parse_size(key, value);
    } else if (key == "margin_percent") {
        if (value.empty()) {
            c.ranker.margin_percent.reset();
        } else {
            c.ranker.margin_percent = parse_real(key, value);
        }
    } else if (key == "expansion_target") {
        c.ranker.expansion_target = parse_real(key, value);
    } else if (key == "max_expansion_rounds") {
        c.ranker.max_expansion_rounds = parse_size(key, value);
    } else if (key == "rrf_constant") {
        c.ranker.rrf_constant = parse_real(key, value);
    } else if (key == "dense_fields") {
        c.ranker.dense_fields = detail::parse_list(value);
    } else if (key == "dense_fetch") {
        c.ranker.dense_fetch = parse_size(key, value);
    } else if (key == "indicator_fetch") {
        c.ranker.indicator_fetch = parse_size(key, value);
    } else {
        throw ValidationError("unknown config key '" + std::string(key) + "'");
    }
}

/// Parses `key = value` lines; blank lines and lines starting with '#' are
/// ignored. Paths default to files next to the config.
inline EngineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
    EngineConfig c;
    c.corpus = base_dir / "corpus.jsonl";
    c.indicator_store = base_dir / "indicators.jsonl";
    c.feedback_log = base_dir / "feedback.jsonl";
    c.index_dir = base_dir / "index";
    std::size_t line_no = 0;
    std::size_t start = 0;
    std::map<std::string, std::size_t, std::less<>> seen;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
            }
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            if (auto it = seen.find(key); it != seen.end()) {
                throw ValidationError("config line " + std::to_string(line_no) + ": key '" + std::string(key) +
                                      "' already set on line " + std::to_string(it->second));
            }
            seen.emplace(std::string(key), line_no);
            try {
                apply_setting(c, key, value, base_dir);
            } catch (const ValidationError& e) {
                throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    c.validate();
    return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text, path.parent_path());
}

}  // namespace fbrank
