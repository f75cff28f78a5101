#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fbrank/error.hpp"
#include "fbrank/text.hpp"

namespace fbrank {

class Embedding {
  public:
    Embedding() = default;
    explicit Embedding(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t dim() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    std::span<const double> values() const { return values_; }
    const std::vector<double>& vector() const { return values_; }

    double norm() const {
        double s = 0.0;
        for (double v : values_) {
            s += v * v;
        }
        return std::sqrt(s);
    }

    friend bool operator==(const Embedding&, const Embedding&) = default;

  private:
    std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

/// Maps a cosine similarity onto [1/3, 1] via 1 / (2 - cos).
inline double vscore_from_cosine(double cosine) {
    cosine = std::clamp(cosine, -1.0, 1.0);
    return 1.0 / (2.0 - cosine);
}

inline double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) {
        throw ValidationError("embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                              std::to_string(b.dim()));
    }
    double na = a.norm();
    double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("zero-norm embedding");
    }
    return dot(a.values(), b.values()) / (na * nb);
}

inline double vscore(const Embedding& a, const Embedding& b) { return vscore_from_cosine(cosine(a, b)); }

/// Text embedding model. Implementations must be deterministic and safe to
/// call concurrently.
class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual std::string name() const = 0;
    /// Called with non-empty trimmed text.
    virtual Embedding embed_text(std::string_view text) const = 0;
};

inline Embedding embed(const EmbeddingProvider& provider, std::string_view text) {
    auto trimmed = trim(text);
    if (trimmed.empty()) {
        throw ValidationError("cannot embed empty text");
    }
    auto e = provider.embed_text(trimmed);
    if (e.dim() != provider.dim()) {
        throw ValidationError("provider '" + provider.name() + "' returned wrong dimension");
    }
    return e;
}

/// Offline provider: signed feature hashing over content tokens, L2-normalized.
/// Texts sharing more tokens land closer in cosine.
class HashingEmbeddingProvider final : public EmbeddingProvider {
  public:
    explicit HashingEmbeddingProvider(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
        if (dim_ == 0) {
            throw ValidationError("embedding dim must be positive");
        }
    }

    std::size_t dim() const override { return dim_; }

    std::string name() const override {
        return "hashing-" + std::to_string(dim_) + (seed_ == 0 ? "" : "-s" + std::to_string(seed_));
    }

    Embedding embed_text(std::string_view text) const override {
        auto tokens = content_tokens(text);
        if (tokens.empty()) {
            tokens = tokenize(text);
        }
        if (tokens.empty()) {
            // punctuation-only input still needs a non-zero vector
            tokens.emplace_back(trim(text));
        }
        std::vector<double> v(dim_, 0.0);
        for (const auto& t : tokens) {
            std::uint64_t h = mix64(fnv1a64(t) ^ seed_);
            std::size_t slot = static_cast<std::size_t>((h >> 1) % dim_);
            v[slot] += (h & 1U) != 0 ? 1.0 : -1.0;
        }
        double n = 0.0;
        for (double x : v) {
            n += x * x;
        }
        if (n == 0.0) {
            // every token cancelled out; fall back to the first token's slot
            std::uint64_t h = mix64(fnv1a64(tokens.front()) ^ seed_);
            v[static_cast<std::size_t>((h >> 1) % dim_)] = 1.0;
            n = 1.0;
        }
        n = std::sqrt(n);
        for (double& x : v) {
            x /= n;
        }
        return Embedding(std::move(v));
    }

  private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Memoizes another provider in memory and in an append-only JSONL file of
/// {"key", "dim", "values"} records keyed by (provider name, text).
class CachedEmbeddingProvider final : public EmbeddingProvider {
  public:
    CachedEmbeddingProvider(std::shared_ptr<const EmbeddingProvider> inner, std::filesystem::path cache_file)
        : inner_(std::move(inner)), path_(std::move(cache_file)) {
        load();
    }

    std::size_t dim() const override { return inner_->dim(); }
    std::string name() const override { return inner_->name(); }

    static std::string cache_key(std::string_view provider_name, std::string_view text) {
        std::uint64_t h = fnv1a64(provider_name);
        h = fnv1a64(std::string_view("\0", 1), h);
        h = fnv1a64(text, h);
        return hex64(h);
    }

    Embedding embed_text(std::string_view text) const override {
        auto key = cache_key(inner_->name(), text);
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) {
                return it->second;
            }
        }
        auto e = inner_->embed_text(text);
        std::lock_guard lock(mutex_);
        auto [it, inserted] = cache_.emplace(key, e);
        if (inserted) {
            std::ofstream out(path_, std::ios::app);
            if (!out) {
                throw IoError("cannot append to embedding cache " + path_.string());
            }
            nlohmann::json j{{"key", key}, {"dim", e.dim()}, {"values", e.vector()}};
            out << j.dump() << '\n';
        }
        return it->second;
    }

    std::size_t cached_entries() const {
        std::lock_guard lock(mutex_);
        return cache_.size();
    }

  private:
    void load() {
        std::ifstream in(path_);
        if (!in) {
            return;
        }
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) {
                continue;
            }
            try {
                auto j = nlohmann::json::parse(line);
                auto values = j.at("values").get<std::vector<double>>();
                if (values.size() != j.at("dim").get<std::size_t>() || values.size() != inner_->dim()) {
                    continue;
                }
                cache_.emplace(j.at("key").get<std::string>(), Embedding(std::move(values)));
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(path_.string() + ":" + std::to_string(line_no) + ": bad cache record: " + e.what());
            }
        }
    }

    std::shared_ptr<const EmbeddingProvider> inner_;
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, Embedding> cache_;
};

}  // namespace fbrank
