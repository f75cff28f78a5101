#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fbrank/corpus.hpp"
#include "fbrank/embedding.hpp"
#include "fbrank/error.hpp"
#include "fbrank/text.hpp"
#include "fbrank/timestamp.hpp"

namespace fbrank {

enum class IndicatorSource { synthetic, feedback };

struct ChunkScope {
    std::string chunk_id;
    friend bool operator==(const ChunkScope&, const ChunkScope&) = default;
};

struct DocumentScope {
    std::string doc_id;
    friend bool operator==(const DocumentScope&, const DocumentScope&) = default;
};

using IndicatorScope = std::variant<ChunkScope, DocumentScope>;

/// A (query, target, signal) record stating how useful the target was for the query.
struct Indicator {
    std::string query;
    Embedding query_embedding;
    std::vector<std::string> keywords;
    double signal = 0.0;  // [-1, +1]
    IndicatorScope scope;
    IndicatorSource source = IndicatorSource::feedback;
    Timestamp created_at{};
    std::int64_t doc_version = 1;

    bool chunk_scoped() const { return std::holds_alternative<ChunkScope>(scope); }

    const std::string& target_id() const {
        return chunk_scoped() ? std::get<ChunkScope>(scope).chunk_id : std::get<DocumentScope>(scope).doc_id;
    }

    std::string doc_id() const { return chunk_scoped() ? doc_id_of_chunk(target_id()) : target_id(); }
};

/// A rated interaction: the user's query, the star rating and the documents
/// the answer cited (best first).
struct FeedbackEvent {
    std::string query;
    std::optional<std::string> rewritten_intent;
    int star_rating = 3;
    std::vector<std::string> referenced_docs;
    Timestamp timestamp{};
};

inline void validate(const FeedbackEvent& e) {
    if (e.star_rating < 1 || e.star_rating > 5) {
        throw ValidationError("star rating must be in 1..5, got " + std::to_string(e.star_rating));
    }
    if (e.referenced_docs.empty()) {
        throw ValidationError("feedback event references no documents");
    }
    if (trim(e.query).empty()) {
        throw ValidationError("feedback event has an empty query");
    }
}

struct SignalMapping {
    /// Apply the citation-rank multiplier to negative ratings too.
    bool rank_refine_negative = true;
};

/// Linear star map (stars - 3) / 2, refined by citation rank: the j-th cited
/// document (1-based) is scaled by max(1 - 0.25 (j - 1), 0.25).
inline std::vector<std::pair<std::string, double>> map_star_to_signals(const FeedbackEvent& event,
                                                                       const SignalMapping& mapping = {}) {
    validate(event);
    double base = (event.star_rating - 3) / 2.0;
    std::vector<std::pair<std::string, double>> out;
    out.reserve(event.referenced_docs.size());
    for (std::size_t j = 0; j < event.referenced_docs.size(); ++j) {
        double scale = std::max(1.0 - 0.25 * static_cast<double>(j), 0.25);
        if (base < 0.0 && !mapping.rank_refine_negative) {
            scale = 1.0;
        }
        out.emplace_back(event.referenced_docs[j], base * scale);
    }
    return out;
}

/// Feedback indicators keyed by document (most recent first, at most K each)
/// and synthetic indicators keyed by chunk.
class IndicatorRepository {
  public:
    explicit IndicatorRepository(std::size_t max_feedback_per_doc = 6) : max_feedback_(max_feedback_per_doc) {
        if (max_feedback_ == 0) {
            throw ValidationError("max_feedback_per_doc must be positive");
        }
    }

    std::size_t max_feedback_per_doc() const { return max_feedback_; }

    /// Stores a document-scoped feedback indicator. An older indicator with the
    /// same query on the same document is replaced. Returns whether the
    /// indicator survived K-trimming.
    bool add_feedback(Indicator ind) {
        check_signal(ind.signal);
        if (ind.source != IndicatorSource::feedback || ind.chunk_scoped()) {
            throw ValidationError("feedback indicators must be document-scoped");
        }
        auto& list = by_document_[ind.target_id()];
        auto dup = std::find_if(list.begin(), list.end(), [&](const Indicator& x) { return x.query == ind.query; });
        if (dup != list.end()) {
            if (dup->created_at > ind.created_at) {
                return false;
            }
            list.erase(dup);
        }
        auto pos = std::find_if(list.begin(), list.end(),
                                [&](const Indicator& x) { return x.created_at <= ind.created_at; });
        auto idx = static_cast<std::size_t>(pos - list.begin());
        list.insert(pos, std::move(ind));
        if (list.size() > max_feedback_) {
            list.resize(max_feedback_);
        }
        return idx < max_feedback_;
    }

    void add_synthetic(Indicator ind) {
        if (ind.source != IndicatorSource::synthetic || !ind.chunk_scoped()) {
            throw ValidationError("synthetic indicators must be chunk-scoped");
        }
        if (ind.signal != 1.0) {
            throw ValidationError("synthetic indicators carry signal +1");
        }
        by_chunk_[ind.target_id()].push_back(std::move(ind));
    }

    void add(Indicator ind) {
        if (ind.source == IndicatorSource::synthetic) {
            add_synthetic(std::move(ind));
        } else {
            add_feedback(std::move(ind));
        }
    }

    const std::map<std::string, std::vector<Indicator>, std::less<>>& by_document() const { return by_document_; }
    const std::map<std::string, std::vector<Indicator>, std::less<>>& by_chunk() const { return by_chunk_; }

    std::size_t feedback_count() const { return count(by_document_); }
    std::size_t synthetic_count() const { return count(by_chunk_); }
    std::size_t size() const { return feedback_count() + synthetic_count(); }
    bool empty() const { return size() == 0; }

    /// Drops indicators whose document vanished or changed version since the
    /// indicator was created.
    std::size_t evict_stale(std::span<const Document> corpus) { return evict_stale(make_catalog(corpus)); }

    std::size_t evict_stale(const DocumentCatalog& catalog) {
        auto stale = [&](const Indicator& ind) {
            auto it = catalog.find(ind.doc_id());
            return it == catalog.end() || ind.doc_version < it->second;
        };
        return evict_if(by_document_, stale) + evict_if(by_chunk_, stale);
    }

    /// Every indicator in deterministic order: feedback by doc id, then synthetic by chunk id.
    std::vector<Indicator> all() const {
        std::vector<Indicator> out;
        out.reserve(size());
        for (const auto& [_, list] : by_document_) {
            out.insert(out.end(), list.begin(), list.end());
        }
        for (const auto& [_, list] : by_chunk_) {
            out.insert(out.end(), list.begin(), list.end());
        }
        return out;
    }

  private:
    using Map = std::map<std::string, std::vector<Indicator>, std::less<>>;

    static void check_signal(double s) {
        if (!(s >= -1.0 && s <= 1.0)) {
            throw ValidationError("indicator signal must lie in [-1, 1]");
        }
    }

    static std::size_t count(const Map& m) {
        std::size_t n = 0;
        for (const auto& [_, list] : m) {
            n += list.size();
        }
        return n;
    }

    template <typename Pred>
    static std::size_t evict_if(Map& m, Pred pred) {
        std::size_t n = 0;
        for (auto it = m.begin(); it != m.end();) {
            n += std::erase_if(it->second, pred);
            it = it->second.empty() ? m.erase(it) : std::next(it);
        }
        return n;
    }

    std::size_t max_feedback_;
    Map by_document_;
    Map by_chunk_;
};

/// Writes one document-scoped feedback indicator per (doc, signal) pair of
/// the event. Unknown documents are skipped with a warning. Returns the number
/// of indicators stored.
inline std::size_t ingest_feedback(IndicatorRepository& repo, const FeedbackEvent& event,
                                   const EmbeddingProvider& provider, const DocumentCatalog& catalog,
                                   const SignalMapping& mapping = {}) {
    auto signals = map_star_to_signals(event, mapping);
    auto embedding = embed(provider, event.query);
    auto keywords = extract_keywords(event.query);
    std::size_t written = 0;
    for (auto& [doc_id, signal] : signals) {
        auto it = catalog.find(doc_id);
        if (it == catalog.end()) {
            spdlog::warn("feedback references unknown document '{}'; skipped", doc_id);
            continue;
        }
        Indicator ind;
        ind.query = event.query;
        ind.query_embedding = embedding;
        ind.keywords = keywords;
        ind.signal = signal;
        ind.scope = DocumentScope{doc_id};
        ind.source = IndicatorSource::feedback;
        ind.created_at = event.timestamp;
        ind.doc_version = it->second;
        if (repo.add_feedback(std::move(ind))) {
            ++written;
        }
    }
    return written;
}

/// Produces hypothetical queries a chunk answers. A real implementation would
/// prompt an LLM; the verifier hook can reject queries the model fails to
/// answer from the chunk.
class SyntheticQueryProvider {
  public:
    using Verifier = std::function<bool(const Chunk&, const std::string&)>;

    explicit SyntheticQueryProvider(std::size_t queries_per_chunk = 5) : queries_per_chunk_(queries_per_chunk) {
        if (queries_per_chunk_ == 0) {
            throw ValidationError("queries_per_chunk must be positive");
        }
    }
    virtual ~SyntheticQueryProvider() = default;

    std::size_t queries_per_chunk() const { return queries_per_chunk_; }
    void set_verifier(Verifier v) { verifier_ = std::move(v); }

    virtual std::string name() const = 0;

    /// Generated queries with the verifier applied.
    std::vector<std::string> queries_for(const Chunk& chunk) const {
        auto qs = generate(chunk);
        if (verifier_) {
            std::erase_if(qs, [&](const std::string& q) { return !verifier_(chunk, q); });
        }
        return qs;
    }

  protected:
    virtual std::vector<std::string> generate(const Chunk& chunk) const = 0;

  private:
    std::size_t queries_per_chunk_;
    Verifier verifier_;
};

/// Content keywords ordered by term frequency, ties by first occurrence.
inline std::vector<std::string> top_keywords(std::string_view text, std::size_t limit) {
    auto tokens = content_tokens(text);
    std::vector<std::pair<std::string, std::size_t>> counts;
    std::unordered_map<std::string, std::size_t> pos;
    for (auto& t : tokens) {
        auto [it, fresh] = pos.try_emplace(t, counts.size());
        if (fresh) {
            counts.emplace_back(t, 0);
        }
        ++counts[it->second].second;
    }
    std::stable_sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < counts.size() && i < limit; ++i) {
        out.push_back(counts[i].first);
    }
    return out;
}

/// Deterministic offline stand-in for the LLM: fills question templates with
/// the chunk's most frequent keywords.
class TemplateQueryProvider final : public SyntheticQueryProvider {
  public:
    using SyntheticQueryProvider::SyntheticQueryProvider;

    std::string name() const override { return "template"; }

  protected:
    std::vector<std::string> generate(const Chunk& chunk) const override {
        auto kw = top_keywords(chunk.content, 8);
        if (kw.empty()) {
            kw = tokenize(chunk.content);
        }
        if (kw.empty()) {
            throw ValidationError("chunk " + chunk.chunk_id + " has no usable terms");
        }
        auto at = [&](std::size_t i) -> const std::string& { return kw[i % kw.size()]; };
        std::vector<std::string> out;
        for (std::size_t i = 0; out.size() < queries_per_chunk(); ++i) {
            std::size_t o = i / 5;  // later rounds shift to lower-ranked keywords
            switch (i % 5) {
                case 0: out.push_back("how to " + at(o) + " " + at(o + 1)); break;
                case 1: out.push_back("what is " + at(o)); break;
                case 2: out.push_back(at(o) + " " + at(o + 1) + " " + at(o + 2)); break;
                case 3: out.push_back("why does " + at(o + 1) + " " + at(o)); break;
                default: out.push_back("explain " + at(o + 2) + " " + at(o)); break;
            }
        }
        return out;
    }
};

/// All-or-nothing: either exactly queries_per_chunk indicators or an error.
inline std::vector<Indicator> generate_synthetic_indicators(const Chunk& chunk, const SyntheticQueryProvider& provider,
                                                            const EmbeddingProvider& emb, std::int64_t doc_version,
                                                            Timestamp created_at = {}) {
    if (trim(chunk.content).empty()) {
        throw ValidationError("chunk " + chunk.chunk_id + " has empty content");
    }
    auto queries = provider.queries_for(chunk);
    if (queries.size() != provider.queries_per_chunk()) {
        throw ValidationError("synthetic provider '" + provider.name() + "' returned " +
                              std::to_string(queries.size()) + " queries for " + chunk.chunk_id + ", expected " +
                              std::to_string(provider.queries_per_chunk()));
    }
    std::vector<Indicator> out;
    out.reserve(queries.size());
    for (auto& q : queries) {
        Indicator ind;
        ind.query_embedding = embed(emb, q);
        ind.keywords = extract_keywords(q);
        ind.query = std::move(q);
        ind.signal = 1.0;
        ind.scope = ChunkScope{chunk.chunk_id};
        ind.source = IndicatorSource::synthetic;
        ind.created_at = created_at;
        ind.doc_version = doc_version;
        out.push_back(std::move(ind));
    }
    return out;
}

/// Synthetic indicators for every chunk, added to `repo`. Returns the count added.
inline std::size_t add_synthetic_indicators(IndicatorRepository& repo, std::span<const Chunk> chunks,
                                            const SyntheticQueryProvider& provider, const EmbeddingProvider& emb,
                                            const DocumentCatalog& catalog, Timestamp created_at = {}) {
    std::size_t n = 0;
    for (const auto& c : chunks) {
        auto it = catalog.find(c.doc_id);
        std::int64_t version = it == catalog.end() ? 1 : it->second;
        for (auto& ind : generate_synthetic_indicators(c, provider, emb, version, created_at)) {
            repo.add_synthetic(std::move(ind));
            ++n;
        }
    }
    return n;
}

// --- persistence -----------------------------------------------------------

inline nlohmann::json to_json(const Indicator& ind) {
    return {
        {"query", ind.query},
        {"query_embedding", ind.query_embedding.vector()},
        {"keywords", ind.keywords},
        {"signal", ind.signal},
        {"scope", {{"kind", ind.chunk_scoped() ? "chunk" : "document"}, {"id", ind.target_id()}}},
        {"source", ind.source == IndicatorSource::synthetic ? "synthetic" : "feedback"},
        {"created_at", format_iso8601(ind.created_at)},
        {"doc_version", ind.doc_version},
    };
}

inline Indicator indicator_from_json(const nlohmann::json& j) {
    Indicator ind;
    ind.query = j.at("query").get<std::string>();
    ind.query_embedding = Embedding(j.at("query_embedding").get<std::vector<double>>());
    ind.keywords = j.at("keywords").get<std::vector<std::string>>();
    ind.signal = j.at("signal").get<double>();
    const auto& scope = j.at("scope");
    auto kind = scope.at("kind").get<std::string>();
    auto id = scope.at("id").get<std::string>();
    if (kind == "chunk") {
        ind.scope = ChunkScope{id};
    } else if (kind == "document") {
        ind.scope = DocumentScope{id};
    } else {
        throw ValidationError("unknown indicator scope kind '" + kind + "'");
    }
    auto source = j.at("source").get<std::string>();
    if (source == "synthetic") {
        ind.source = IndicatorSource::synthetic;
    } else if (source == "feedback") {
        ind.source = IndicatorSource::feedback;
    } else {
        throw ValidationError("unknown indicator source '" + source + "'");
    }
    ind.created_at = parse_iso8601(j.at("created_at").get<std::string>());
    ind.doc_version = j.at("doc_version").get<std::int64_t>();
    return ind;
}

inline nlohmann::json to_json(const FeedbackEvent& e) {
    nlohmann::json j{{"query", e.query},
                     {"star_rating", e.star_rating},
                     {"referenced_docs", e.referenced_docs},
                     {"timestamp", format_iso8601(e.timestamp)}};
    j["rewritten_intent"] = e.rewritten_intent ? nlohmann::json(*e.rewritten_intent) : nlohmann::json(nullptr);
    return j;
}

inline FeedbackEvent feedback_event_from_json(const nlohmann::json& j) {
    FeedbackEvent e;
    e.query = j.at("query").get<std::string>();
    e.star_rating = j.at("star_rating").get<int>();
    e.referenced_docs = j.at("referenced_docs").get<std::vector<std::string>>();
    e.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
    if (j.contains("rewritten_intent") && j["rewritten_intent"].is_string()) {
        e.rewritten_intent = j["rewritten_intent"].get<std::string>();
    }
    validate(e);
    return e;
}

namespace detail {

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            out.push_back(parse(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace detail

inline std::vector<Indicator> load_indicators(const std::filesystem::path& path) {
    return detail::read_jsonl<Indicator>(path, indicator_from_json);
}

inline void save_indicators(const std::filesystem::path& path, std::span<const Indicator> indicators) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& ind : indicators) {
        out << to_json(ind).dump() << '\n';
    }
}

inline std::vector<FeedbackEvent> load_feedback_events(const std::filesystem::path& path) {
    return detail::read_jsonl<FeedbackEvent>(path, feedback_event_from_json);
}

inline void append_feedback_event(const std::filesystem::path& path, const FeedbackEvent& e) {
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw IoError("cannot append to " + path.string());
    }
    out << to_json(e).dump() << '\n';
}

}  // namespace fbrank
