#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fbrank/error.hpp"
#include "fbrank/fusion.hpp"
#include "fbrank/index.hpp"
#include "fbrank/indicators.hpp"
#include "fbrank/query.hpp"

namespace fbrank {

struct RankerConfig {
    /// Minimum vscore between a user input and an indicator query for the
    /// indicator to take part in the vote.
    double threshold = 0.75;
    /// Separate admission threshold for synthetic indicators; `threshold` when unset.
    std::optional<double> synthetic_threshold;
    std::size_t top_k = 10;
    /// Chunks kept per non-zero vote group.
    std::size_t group_truncation = 1;
    /// Within a vote group, drop chunks whose rrf is below this fraction of the group's best.
    std::optional<double> margin_percent;
    /// Expand retrieval until at least ceil(expansion_target * top_k) chunks survive.
    double expansion_target = 0.5;
    std::size_t max_expansion_rounds = 4;
    double rrf_constant = kDefaultRrfConstant;
    std::vector<std::string> dense_fields = default_dense_fields();
    /// Per-probe fetch size of the dense hybrid search; 0 means top_k.
    std::size_t dense_fetch = 0;
    std::size_t indicator_fetch = 50;
    std::size_t max_inputs = 2;

    void validate() const {
        auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
        if (!in_unit(threshold) || (synthetic_threshold && !in_unit(*synthetic_threshold))) {
            throw ValidationError("threshold must lie in (0, 1]");
        }
        if (top_k == 0) {
            throw ValidationError("top_k must be positive");
        }
        if (group_truncation == 0) {
            throw ValidationError("group_truncation must be positive");
        }
        if (margin_percent && !in_unit(*margin_percent)) {
            throw ValidationError("margin_percent must lie in (0, 1]");
        }
        if (!in_unit(expansion_target)) {
            throw ValidationError("expansion_target must lie in (0, 1]");
        }
        if (max_expansion_rounds == 0) {
            throw ValidationError("max_expansion_rounds must be positive");
        }
        if (!(rrf_constant > 0.0)) {
            throw ValidationError("rrf_constant must be positive");
        }
        if (dense_fields.empty()) {
            throw ValidationError("at least one dense field is required");
        }
        if (indicator_fetch == 0 || max_inputs == 0) {
            throw ValidationError("fetch sizes and max_inputs must be positive");
        }
    }
};

/// One admitted (indicator, input) pair.
struct Contribution {
    std::uint32_t indicator = 0;  // position in SearchIndex::indicators()
    std::size_t input = 0;
    std::string query;
    double signal = 0.0;
    double c = 0.0;
};

struct VoteResult {
    double score = 0.0;
    std::size_t admitted = 0;
    std::vector<Contribution> contributions;
};

/// Threshold-gated, similarity-weighted mean of indicator signals:
/// sum of c(u, q_i) * s_i over admitted pairs divided by the number of
/// admitted pairs, where a pair is admitted when vscore >= T. No admitted
/// pair means a vote of 0.
inline VoteResult vote(std::span<const Indicator* const> indicators, const QueryBundle& inputs, double threshold,
                       std::optional<double> synthetic_threshold = std::nullopt) {
    VoteResult r;
    double total = 0.0;
    for (std::size_t i = 0; i < indicators.size(); ++i) {
        const auto& ind = *indicators[i];
        double t = ind.source == IndicatorSource::synthetic && synthetic_threshold ? *synthetic_threshold : threshold;
        for (std::size_t u = 0; u < inputs.inputs.size(); ++u) {
            double c = vscore(inputs.inputs[u].embedding, ind.query_embedding);
            if (c >= t) {
                total += c * ind.signal;
                ++r.admitted;
                r.contributions.push_back({static_cast<std::uint32_t>(i), u, ind.query, ind.signal, c});
            }
        }
    }
    if (r.admitted > 0) {
        r.score = std::clamp(total / static_cast<double>(r.admitted), -1.0, 1.0);
    }
    return r;
}

/// Vote of one indexed chunk over its attached indicators.
inline VoteResult vote(const SearchIndex& index, std::size_t chunk, const QueryBundle& inputs, const RankerConfig& cfg) {
    auto attached = index.attached(chunk);
    std::vector<const Indicator*> refs;
    refs.reserve(attached.size());
    for (auto k : attached) {
        refs.push_back(&index.indicators()[k]);
    }
    auto r = vote(refs, inputs, cfg.threshold, cfg.synthetic_threshold);
    for (auto& c : r.contributions) {
        c.indicator = attached[c.indicator];
    }
    return r;
}

/// Votes are grouped after rounding to six decimals.
inline std::int64_t vote_group_key(double vote) { return std::llround(vote * 1e6); }

struct ScoredChunk {
    std::string chunk_id;
    std::string doc_id;
    double rrf_score = 0.0;
    double vote_score = 0.0;
    std::int64_t vote_group = 0;
    std::vector<Contribution> contributing_indicators;
};

/// vote desc, rrf desc, chunk id asc.
inline bool two_track_before(const ScoredChunk& a, const ScoredChunk& b) {
    if (a.vote_score != b.vote_score) {
        return a.vote_score > b.vote_score;
    }
    if (a.rrf_score != b.rrf_score) {
        return a.rrf_score > b.rrf_score;
    }
    return a.chunk_id < b.chunk_id;
}

/// The union of everything the retrieval strategies returned, plus the
/// pool-wide per-field orderings rrf is computed over.
struct CandidatePool {
    std::vector<std::string> chunks;     // ascending chunk id
    std::vector<std::size_t> positions;  // index positions, ascending
    std::map<std::string, std::vector<FieldRankedList>> per_strategy;
    std::vector<FieldRankedList> fusion_lists;

    std::size_t size() const { return chunks.size(); }
    bool empty() const { return chunks.empty(); }
};

inline constexpr const char* kHybridStrategy = "hybrid";
inline constexpr const char* kIndicatorStrategy = "indicator_probe";

inline CandidatePool build_pool(const SearchIndex& index, const QueryBundle& inputs,
                                std::span<const std::string> dense_fields, std::size_t dense_fetch,
                                std::size_t indicator_fetch, double indicator_min_score = 0.0) {
    CandidatePool pool;
    auto& hybrid = pool.per_strategy[kHybridStrategy];
    for (std::size_t u = 0; u < inputs.inputs.size(); ++u) {
        for (const auto& f : dense_fields) {
            hybrid.push_back(index.search_field(f, inputs.inputs[u], dense_fetch, u));
        }
    }
    pool.per_strategy[kIndicatorStrategy] = indicator_probe(index, inputs, indicator_fetch, indicator_min_score);

    std::vector<FieldRankedList> all;
    for (const auto& [_, lists] : pool.per_strategy) {
        all.insert(all.end(), lists.begin(), lists.end());
    }
    pool.positions = positions_of(index, all);
    for (auto p : pool.positions) {
        pool.chunks.push_back(index.chunk_id(p));
    }
    std::sort(pool.chunks.begin(), pool.chunks.end());
    pool.fusion_lists = fusion_lists_for(index, inputs, dense_fields, pool.positions);
    return pool;
}

/// Prunes negative votes, keeps the top-N by rrf in each non-zero vote group,
/// applies the optional margin filter, then orders by (vote, rrf, chunk id)
/// and truncates to top_k. The zero-vote group carries no indicator evidence
/// and is not truncated.
inline std::vector<ScoredChunk> rerank_scored(std::vector<ScoredChunk> scored, const RankerConfig& cfg) {
    std::map<std::int64_t, std::vector<ScoredChunk>> groups;
    for (auto& s : scored) {
        if (s.vote_score < 0.0) {
            continue;
        }
        s.vote_group = vote_group_key(s.vote_score);
        groups[s.vote_group].push_back(std::move(s));
    }
    auto by_rrf = [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.rrf_score != b.rrf_score) {
            return a.rrf_score > b.rrf_score;
        }
        return a.chunk_id < b.chunk_id;
    };
    std::vector<ScoredChunk> out;
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end(), by_rrf);
        if (key != 0 && members.size() > cfg.group_truncation) {
            members.resize(cfg.group_truncation);
        }
        if (cfg.margin_percent && !members.empty()) {
            double floor = *cfg.margin_percent * members.front().rrf_score;
            std::erase_if(members, [&](const ScoredChunk& s) { return s.rrf_score < floor; });
        }
        out.insert(out.end(), std::make_move_iterator(members.begin()), std::make_move_iterator(members.end()));
    }
    std::sort(out.begin(), out.end(), two_track_before);
    if (out.size() > cfg.top_k) {
        out.resize(cfg.top_k);
    }
    return out;
}

/// rrf and vote for every pooled chunk.
inline std::vector<ScoredChunk> score_pool(const SearchIndex& index, const CandidatePool& pool,
                                           const QueryBundle& inputs, const RankerConfig& cfg) {
    auto rrf = rrf_scores(pool.fusion_lists, cfg.rrf_constant);
    std::vector<ScoredChunk> out;
    out.reserve(pool.positions.size());
    for (auto pos : pool.positions) {
        ScoredChunk s;
        s.chunk_id = index.chunk_id(pos);
        s.doc_id = index.chunk(pos).chunk.doc_id;
        auto it = rrf.find(s.chunk_id);
        s.rrf_score = it == rrf.end() ? 0.0 : it->second;
        auto v = vote(index, pos, inputs, cfg);
        s.vote_score = v.score;
        s.vote_group = vote_group_key(v.score);
        s.contributing_indicators = std::move(v.contributions);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<ScoredChunk> two_track_rerank(const SearchIndex& index, const CandidatePool& pool,
                                                 const QueryBundle& inputs, const RankerConfig& cfg) {
    return rerank_scored(score_pool(index, pool, inputs, cfg), cfg);
}

struct RetrievalResult {
    std::vector<ScoredChunk> chunks;
    std::size_t rounds = 0;
    std::size_t pool_size = 0;
};

inline std::size_t expansion_goal(const RankerConfig& cfg) {
    return static_cast<std::size_t>(std::ceil(cfg.expansion_target * static_cast<double>(cfg.top_k) - 1e-9));
}

/// Lowest vscore at which any indicator can be admitted; the indicator probe
/// only returns chunks with such a match.
inline double admission_floor(const RankerConfig& cfg) {
    return cfg.synthetic_threshold ? std::min(cfg.threshold, *cfg.synthetic_threshold) : cfg.threshold;
}

/// Retrieve, score and re-rank; when too few chunks survive, double every
/// fetch size and try again, up to max_expansion_rounds.
inline RetrievalResult retrieve_adaptive(const SearchIndex& index, const QueryBundle& inputs, const RankerConfig& cfg) {
    cfg.validate();
    validate(inputs, cfg.max_inputs);
    RetrievalResult result;
    std::size_t dense = cfg.dense_fetch == 0 ? cfg.top_k : cfg.dense_fetch;
    std::size_t probe = cfg.indicator_fetch;
    auto goal = expansion_goal(cfg);
    for (std::size_t round = 1; round <= cfg.max_expansion_rounds; ++round) {
        dense = std::max<std::size_t>(1, std::min(dense, index.size()));
        probe = std::max<std::size_t>(1, std::min(probe, index.size()));
        auto pool = build_pool(index, inputs, cfg.dense_fields, dense, probe, admission_floor(cfg));
        result.chunks = two_track_rerank(index, pool, inputs, cfg);
        result.rounds = round;
        result.pool_size = pool.size();
        bool exhausted = pool.size() >= index.size() || (dense >= index.size() && probe >= index.size());
        if (result.chunks.size() >= goal || exhausted) {
            break;
        }
        dense *= 2;
        probe *= 2;
    }
    return result;
}

/// Document ids of ranked chunks, first occurrence order.
inline std::vector<std::string> ranked_documents(std::span<const ScoredChunk> chunks) {
    std::vector<std::string> out;
    for (const auto& c : chunks) {
        if (std::find(out.begin(), out.end(), c.doc_id) == out.end()) {
            out.push_back(c.doc_id);
        }
    }
    return out;
}

/// Stable output record: {chunk_id, doc_id, vote, rrf, round, indicators}.
inline nlohmann::json to_json(const ScoredChunk& s, std::size_t round) {
    nlohmann::json inds = nlohmann::json::array();
    for (const auto& c : s.contributing_indicators) {
        inds.push_back({{"query", c.query}, {"signal", c.signal}, {"c", c.c}});
    }
    return {{"chunk_id", s.chunk_id}, {"doc_id", s.doc_id}, {"vote", s.vote_score},
            {"rrf", s.rrf_score},     {"round", round},        {"indicators", inds}};
}

}  // namespace fbrank
