#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include <spdlog/spdlog.h>

#include "fbrank/corpus.hpp"
#include "fbrank/embedding.hpp"
#include "fbrank/error.hpp"
#include "fbrank/fusion.hpp"
#include "fbrank/indicators.hpp"
#include "fbrank/query.hpp"
#include "fbrank/text.hpp"

namespace fbrank {

namespace field {
inline constexpr std::string_view title = "title";
inline constexpr std::string_view content = "content";
inline constexpr std::string_view keywords = "keywords";
inline constexpr std::string_view indicator_queries = "indicator_queries";
inline constexpr std::string_view title_embedding = "title_embedding";
inline constexpr std::string_view content_embedding = "content_embedding";
inline constexpr std::string_view indicator_embedding = "indicator_embedding";
}  // namespace field

inline std::vector<std::string> default_dense_fields() {
    return {std::string(field::title), std::string(field::content), std::string(field::title_embedding),
            std::string(field::content_embedding)};
}

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct FieldStats {
    std::size_t documents = 0;  // chunks with non-empty field text
    std::size_t terms = 0;      // distinct terms
    std::size_t total_length = 0;
    double average_length = 0.0;
};

/// Unique query terms in first-occurrence order; BM25 scores each term once.
inline std::vector<std::string> query_terms(std::string_view query) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : content_tokens(query)) {
        if (seen.insert(t).second) {
            out.push_back(std::move(t));
        }
    }
    return out;
}

/// Okapi BM25 over one text field. Slots are chunk positions; empty slots do
/// not count towards the collection size or average length.
class InvertedIndex {
  public:
    InvertedIndex() = default;

    explicit InvertedIndex(std::span<const std::vector<std::string>> slots) : lengths_(slots.size(), 0) {
        for (std::size_t d = 0; d < slots.size(); ++d) {
            const auto& tokens = slots[d];
            if (tokens.empty()) {
                continue;
            }
            lengths_[d] = static_cast<std::uint32_t>(tokens.size());
            stats_.total_length += tokens.size();
            ++stats_.documents;
            std::unordered_map<std::string_view, std::uint32_t> tf;
            for (const auto& t : tokens) {
                ++tf[t];
            }
            for (const auto& [term, count] : tf) {
                postings_[std::string(term)].push_back({static_cast<std::uint32_t>(d), count});
            }
        }
        stats_.terms = postings_.size();
        stats_.average_length =
            stats_.documents == 0 ? 0.0 : static_cast<double>(stats_.total_length) / static_cast<double>(stats_.documents);
    }

    const FieldStats& stats() const { return stats_; }
    std::size_t slots() const { return lengths_.size(); }

    std::size_t document_frequency(std::string_view term) const {
        auto it = postings_.find(std::string(term));
        return it == postings_.end() ? 0 : it->second.size();
    }

    double idf(std::size_t df) const {
        auto n = static_cast<double>(stats_.documents);
        auto f = static_cast<double>(df);
        return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
    }

    double term_weight(std::uint32_t tf, std::uint32_t length, const Bm25Params& p) const {
        double norm = stats_.average_length > 0.0 ? static_cast<double>(length) / stats_.average_length : 0.0;
        double f = static_cast<double>(tf);
        return f * (p.k1 + 1.0) / (f + p.k1 * (1.0 - p.b + p.b * norm));
    }

    /// BM25 of one slot against already-deduplicated query terms.
    double score(std::span<const std::string> terms, std::size_t slot, const Bm25Params& p) const {
        if (slot >= lengths_.size() || lengths_[slot] == 0) {
            return 0.0;
        }
        double s = 0.0;
        for (const auto& t : terms) {
            auto it = postings_.find(t);
            if (it == postings_.end()) {
                continue;
            }
            const auto& plist = it->second;
            auto pos = std::lower_bound(plist.begin(), plist.end(), slot,
                                        [](const Posting& x, std::size_t d) { return x.doc < d; });
            if (pos != plist.end() && pos->doc == slot) {
                s += idf(plist.size()) * term_weight(pos->tf, lengths_[slot], p);
            }
        }
        return s;
    }

    /// Scores of every slot matching at least one term.
    std::vector<std::pair<std::uint32_t, double>> matches(std::span<const std::string> terms, const Bm25Params& p) const {
        std::unordered_map<std::uint32_t, double> acc;
        for (const auto& t : terms) {
            auto it = postings_.find(t);
            if (it == postings_.end()) {
                continue;
            }
            double w = idf(it->second.size());
            for (const auto& post : it->second) {
                acc[post.doc] += w * term_weight(post.tf, lengths_[post.doc], p);
            }
        }
        return {acc.begin(), acc.end()};
    }

  private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    std::vector<std::uint32_t> lengths_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    FieldStats stats_;
};

/// A chunk with its derived index fields.
struct EmbeddedChunk {
    Chunk chunk;
    std::vector<std::string> keywords;
    Embedding title_embedding;
    Embedding content_embedding;
};

inline EmbeddedChunk embed_chunk(Chunk c, const EmbeddingProvider& provider) {
    EmbeddedChunk e;
    e.keywords = extract_keywords(c.content);
    e.content_embedding = embed(provider, c.content);
    e.title_embedding = trim(c.title).empty() ? e.content_embedding : embed(provider, c.title);
    e.chunk = std::move(c);
    return e;
}

using FieldQuery = std::variant<std::string, Embedding>;

/// Immutable searchable store over chunks and their attached indicators.
/// Copies share the underlying data; with_indicators() swaps only the
/// indicator layer.
class SearchIndex {
  public:
    SearchIndex() : base_(std::make_shared<Base>()), layer_(std::make_shared<Layer>()) {}

    static SearchIndex build(std::span<const Chunk> chunks, const IndicatorRepository& repo,
                             const EmbeddingProvider& provider, Bm25Params params = {}) {
        std::vector<EmbeddedChunk> embedded;
        embedded.reserve(chunks.size());
        for (const auto& c : chunks) {
            embedded.push_back(embed_chunk(c, provider));
        }
        return from_embedded(std::move(embedded), repo, provider.name(), provider.dim(), params);
    }

    static SearchIndex from_embedded(std::vector<EmbeddedChunk> chunks, const IndicatorRepository& repo,
                                     std::string embedding_name, std::size_t dim, Bm25Params params = {}) {
        SearchIndex idx;
        idx.base_ = make_base(std::move(chunks), std::move(embedding_name), dim, params);
        idx.layer_ = make_layer(*idx.base_, repo);
        return idx;
    }

    SearchIndex with_indicators(const IndicatorRepository& repo) const {
        SearchIndex idx;
        idx.base_ = base_;
        idx.layer_ = make_layer(*base_, repo);
        return idx;
    }

    std::size_t size() const { return base_->chunks.size(); }
    bool empty() const { return base_->chunks.empty(); }
    std::span<const EmbeddedChunk> chunks() const { return base_->chunks; }
    const EmbeddedChunk& chunk(std::size_t i) const { return base_->chunks.at(i); }
    const std::string& chunk_id(std::size_t i) const { return base_->chunks[i].chunk.chunk_id; }
    const std::string& embedding_name() const { return base_->embedding_name; }
    std::size_t dim() const { return base_->dim; }
    const Bm25Params& bm25() const { return base_->params; }

    std::optional<std::size_t> find(std::string_view chunk_id) const {
        auto it = base_->by_id.find(std::string(chunk_id));
        if (it == base_->by_id.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    /// Chunk positions of a document in ordinal order.
    std::span<const std::size_t> chunks_of(std::string_view doc_id) const {
        auto it = base_->by_doc.find(doc_id);
        if (it == base_->by_doc.end()) {
            return {};
        }
        return it->second;
    }

    /// The indicator repository contents the layer was built from, after
    /// unknown targets were dropped.
    std::span<const Indicator> indicators() const { return layer_->indicators; }
    std::span<const std::uint32_t> attached(std::size_t chunk) const { return layer_->attached.at(chunk); }

    bool is_text_field(std::string_view f) const {
        return f == field::title || f == field::content || f == field::keywords || f == field::indicator_queries;
    }
    bool is_vector_field(std::string_view f) const {
        return f == field::title_embedding || f == field::content_embedding || f == field::indicator_embedding;
    }

    const InvertedIndex& text_field(std::string_view f) const {
        if (f == field::title) return base_->title;
        if (f == field::content) return base_->content;
        if (f == field::keywords) return base_->keywords;
        if (f == field::indicator_queries) return layer_->queries;
        throw ValidationError("unknown text field '" + std::string(f) + "'");
    }

    /// BM25 of `query` against one chunk's text field; 0 when nothing matches.
    double tscore(std::string_view f, std::string_view query, std::string_view chunk_id) const {
        const auto& inv = text_field(f);
        auto pos = find(chunk_id);
        if (!pos) {
            throw ValidationError("unknown chunk '" + std::string(chunk_id) + "'");
        }
        auto terms = query_terms(query);
        return inv.score(terms, *pos, base_->params);
    }

    /// Top-m chunks by one field. Text fields return matching chunks only;
    /// dense vector fields rank every chunk; the indicator embedding field ranks
    /// chunks by their best-matching attached indicator.
    FieldRankedList search_field(std::string_view f, const FieldQuery& query, std::size_t m,
                                 std::size_t input = 0) const {
        if (m == 0) {
            throw ValidationError("search size must be positive");
        }
        std::vector<std::pair<double, std::uint32_t>> scored;
        if (!is_text_field(f) && !is_vector_field(f)) {
            throw ValidationError("unknown field '" + std::string(f) + "'");
        }
        if (empty()) {
            return FieldRankedList{std::string(f), input, {}};
        }
        if (is_text_field(f)) {
            const auto* text = std::get_if<std::string>(&query);
            if (text == nullptr) {
                throw ValidationError("text field '" + std::string(f) + "' needs a text query");
            }
            auto terms = query_terms(*text);
            for (auto [slot, s] : text_field(f).matches(terms, base_->params)) {
                scored.emplace_back(s, slot);
            }
        } else if (is_vector_field(f)) {
            const auto* emb = std::get_if<Embedding>(&query);
            if (emb == nullptr) {
                throw ValidationError("vector field '" + std::string(f) + "' needs an embedding query");
            }
            check_query(*emb);
            if (f == field::indicator_embedding) {
                auto best = indicator_scores(*emb);
                for (std::size_t i = 0; i < best.size(); ++i) {
                    if (best[i] >= 0.0) {
                        scored.emplace_back(best[i], static_cast<std::uint32_t>(i));
                    }
                }
            } else {
                double qn = emb->norm();
                for (std::size_t i = 0; i < size(); ++i) {
                    scored.emplace_back(vector_score(f, i, *emb, qn), static_cast<std::uint32_t>(i));
                }
            }
        } else {
            throw ValidationError("unknown field '" + std::string(f) + "'");
        }
        return to_ranked(std::string(f), input, std::move(scored), m);
    }

    FieldRankedList search_field(std::string_view f, const QueryInput& q, std::size_t m, std::size_t input = 0) const {
        if (is_text_field(f)) {
            return search_field(f, FieldQuery{q.text}, m, input);
        }
        return search_field(f, FieldQuery{q.embedding}, m, input);
    }

    /// Orders the given chunks by one field for one input. Text fields list
    /// only the chunks that match; vector fields list every chunk.
    FieldRankedList rank_subset(std::string_view f, const QueryInput& q, std::span<const std::size_t> subset,
                                std::size_t input = 0) const {
        std::vector<std::pair<double, std::uint32_t>> scored;
        scored.reserve(subset.size());
        if (is_text_field(f)) {
            auto terms = query_terms(q.text);
            const auto& inv = text_field(f);
            for (auto i : subset) {
                double s = inv.score(terms, i, base_->params);
                if (s > 0.0) {
                    scored.emplace_back(s, static_cast<std::uint32_t>(i));
                }
            }
        } else if (f == field::indicator_embedding) {
            check_query(q.embedding);
            auto best = indicator_scores(q.embedding);
            for (auto i : subset) {
                scored.emplace_back(std::max(best[i], 0.0), static_cast<std::uint32_t>(i));
            }
        } else if (is_vector_field(f)) {
            check_query(q.embedding);
            double qn = q.embedding.norm();
            for (auto i : subset) {
                scored.emplace_back(vector_score(f, i, q.embedding, qn), static_cast<std::uint32_t>(i));
            }
        } else {
            throw ValidationError("unknown field '" + std::string(f) + "'");
        }
        return to_ranked(std::string(f), input, std::move(scored), scored.size());
    }

    /// Per chunk, the best vscore among attached indicators; -1 when none.
    std::vector<double> indicator_scores(const Embedding& q) const {
        std::vector<double> best(size(), -1.0);
        double qn = q.norm();
        const auto& inds = layer_->indicators;
        for (std::size_t k = 0; k < inds.size(); ++k) {
            const auto& e = inds[k].query_embedding;
            double s = vscore_from_cosine(dot(e.values(), q.values()) / (layer_->norms[k] * qn));
            for (auto c : layer_->targets[k]) {
                best[c] = std::max(best[c], s);
            }
        }
        return best;
    }

  private:
    struct Base {
        std::vector<EmbeddedChunk> chunks;
        std::unordered_map<std::string, std::size_t> by_id;
        std::map<std::string, std::vector<std::size_t>, std::less<>> by_doc;
        InvertedIndex title;
        InvertedIndex content;
        InvertedIndex keywords;
        std::vector<double> title_norms;
        std::vector<double> content_norms;
        std::string embedding_name;
        std::size_t dim = 0;
        Bm25Params params;
    };

    struct Layer {
        std::vector<Indicator> indicators;
        std::vector<double> norms;
        std::vector<std::vector<std::uint32_t>> targets;   // indicator -> chunks
        std::vector<std::vector<std::uint32_t>> attached;  // chunk -> indicators
        InvertedIndex queries;
    };

    static std::shared_ptr<const Base> make_base(std::vector<EmbeddedChunk> chunks, std::string name, std::size_t dim,
                                                 Bm25Params params) {
        auto b = std::make_shared<Base>();
        b->embedding_name = std::move(name);
        b->dim = dim;
        b->params = params;
        std::vector<std::vector<std::string>> titles, contents, keywords;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            auto& c = chunks[i];
            if (!b->by_id.emplace(c.chunk.chunk_id, i).second) {
                throw ValidationError("duplicate chunk id '" + c.chunk.chunk_id + "'");
            }
            if (c.title_embedding.dim() != dim || c.content_embedding.dim() != dim) {
                throw ValidationError("chunk '" + c.chunk.chunk_id + "' has embeddings of the wrong dimension");
            }
            b->by_doc[c.chunk.doc_id].push_back(i);
            titles.push_back(content_tokens(c.chunk.title));
            contents.push_back(content_tokens(c.chunk.content));
            keywords.push_back(c.keywords);
            b->title_norms.push_back(c.title_embedding.norm());
            b->content_norms.push_back(c.content_embedding.norm());
        }
        b->title = InvertedIndex(titles);
        b->content = InvertedIndex(contents);
        b->keywords = InvertedIndex(keywords);
        b->chunks = std::move(chunks);
        return b;
    }

    static std::shared_ptr<const Layer> make_layer(const Base& base, const IndicatorRepository& repo) {
        auto l = std::make_shared<Layer>();
        l->attached.resize(base.chunks.size());
        for (const auto& ind : repo.all()) {
            std::vector<std::uint32_t> targets;
            if (ind.chunk_scoped()) {
                auto it = base.by_id.find(ind.target_id());
                if (it != base.by_id.end()) {
                    targets.push_back(static_cast<std::uint32_t>(it->second));
                }
            } else if (auto it = base.by_doc.find(ind.target_id()); it != base.by_doc.end()) {
                for (auto c : it->second) {
                    targets.push_back(static_cast<std::uint32_t>(c));
                }
            }
            if (targets.empty()) {
                spdlog::warn("indicator for unknown target '{}' skipped", ind.target_id());
                continue;
            }
            if (ind.query_embedding.dim() != base.dim || ind.query_embedding.norm() == 0.0) {
                throw ValidationError("indicator '" + ind.query + "' has an embedding incompatible with the index");
            }
            auto k = static_cast<std::uint32_t>(l->indicators.size());
            for (auto c : targets) {
                l->attached[c].push_back(k);
            }
            l->norms.push_back(ind.query_embedding.norm());
            l->targets.push_back(std::move(targets));
            l->indicators.push_back(ind);
        }
        std::vector<std::vector<std::string>> query_text(base.chunks.size());
        for (std::size_t c = 0; c < base.chunks.size(); ++c) {
            for (auto k : l->attached[c]) {
                auto toks = content_tokens(l->indicators[k].query);
                query_text[c].insert(query_text[c].end(), toks.begin(), toks.end());
            }
        }
        l->queries = InvertedIndex(query_text);
        return l;
    }

    void check_query(const Embedding& q) const {
        if (q.dim() != base_->dim) {
            throw ValidationError("query embedding has dimension " + std::to_string(q.dim()) + ", index expects " +
                                  std::to_string(base_->dim));
        }
        if (q.norm() == 0.0) {
            throw ValidationError("zero-norm query embedding");
        }
    }

    double vector_score(std::string_view f, std::size_t i, const Embedding& q, double qn) const {
        const auto& c = base_->chunks[i];
        if (f == field::title_embedding) {
            return vscore_from_cosine(dot(c.title_embedding.values(), q.values()) / (base_->title_norms[i] * qn));
        }
        return vscore_from_cosine(dot(c.content_embedding.values(), q.values()) / (base_->content_norms[i] * qn));
    }

    FieldRankedList to_ranked(std::string f, std::size_t input, std::vector<std::pair<double, std::uint32_t>> scored,
                              std::size_t m) const {
        auto before = [this](const auto& a, const auto& b) {
            if (a.first != b.first) {
                return a.first > b.first;
            }
            return chunk_id(a.second) < chunk_id(b.second);
        };
        m = std::min(m, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(m), scored.end(), before);
        FieldRankedList out{std::move(f), input, {}};
        out.entries.reserve(m);
        for (std::size_t r = 0; r < m; ++r) {
            out.entries.push_back({chunk_id(scored[r].second), scored[r].first});
        }
        return out;
    }

    std::shared_ptr<const Base> base_;
    std::shared_ptr<const Layer> layer_;
};

/// Constituent lists, the pool-wide lists used for fusion and the fused order.
struct HybridResult {
    std::vector<FieldRankedList> constituents;
    std::vector<FieldRankedList> fusion_lists;
    std::vector<RankedEntry> fused;
};

/// Re-ranks a candidate set by each (input, field) pair; rrf over these lists
/// is the local fusion score.
inline std::vector<FieldRankedList> fusion_lists_for(const SearchIndex& index, const QueryBundle& inputs,
                                                     std::span<const std::string> dense_fields,
                                                     std::span<const std::size_t> candidates) {
    std::vector<FieldRankedList> lists;
    for (std::size_t u = 0; u < inputs.inputs.size(); ++u) {
        for (const auto& f : dense_fields) {
            lists.push_back(index.rank_subset(f, inputs.inputs[u], candidates, u));
        }
    }
    return lists;
}

inline std::vector<std::size_t> positions_of(const SearchIndex& index, std::span<const FieldRankedList> lists) {
    std::vector<std::size_t> out;
    std::unordered_set<std::size_t> seen;
    for (const auto& l : lists) {
        for (const auto& e : l.entries) {
            auto pos = *index.find(e.chunk_id);
            if (seen.insert(pos).second) {
                out.push_back(pos);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// One probe per (input, dense field), fused by rrf over the union of what the
/// probes retrieved. Returns at most m fused entries.
inline HybridResult hybrid_search(const SearchIndex& index, const QueryBundle& inputs,
                                  std::span<const std::string> dense_fields, std::size_t m,
                                  double k_const = kDefaultRrfConstant) {
    if (dense_fields.empty()) {
        throw ValidationError("hybrid search needs at least one dense field");
    }
    HybridResult r;
    for (std::size_t u = 0; u < inputs.inputs.size(); ++u) {
        for (const auto& f : dense_fields) {
            r.constituents.push_back(index.search_field(f, inputs.inputs[u], m, u));
        }
    }
    auto pool = positions_of(index, r.constituents);
    r.fusion_lists = fusion_lists_for(index, inputs, dense_fields, pool);
    r.fused = fuse(r.fusion_lists, k_const);
    if (r.fused.size() > m) {
        r.fused.resize(m);
    }
    return r;
}

/// Vector search of each input against the indicator query embeddings, a chunk
/// scoring as its best-matching attached indicator. Chunks whose best match
/// falls below `min_score` are not returned.
inline std::vector<FieldRankedList> indicator_probe(const SearchIndex& index, const QueryBundle& inputs, std::size_t m,
                                                    double min_score = 0.0) {
    std::vector<FieldRankedList> out;
    if (index.indicators().empty()) {
        return out;
    }
    for (std::size_t u = 0; u < inputs.inputs.size(); ++u) {
        auto list = index.search_field(field::indicator_embedding, FieldQuery{inputs.inputs[u].embedding}, m, u);
        std::erase_if(list.entries, [&](const RankedEntry& e) { return e.score < min_score; });
        if (!list.entries.empty()) {
            out.push_back(std::move(list));
        }
    }
    return out;
}

}  // namespace fbrank
