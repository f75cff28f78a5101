#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fbrank/corpus.hpp"
#include "fbrank/embedding.hpp"
#include "fbrank/error.hpp"
#include "fbrank/index.hpp"
#include "fbrank/indicators.hpp"
#include "fbrank/query.hpp"
#include "fbrank/ranker.hpp"
#include "fbrank/text.hpp"
#include "fbrank/timestamp.hpp"

namespace fbrank {

// --- metrics ----------------------------------------------------------------

namespace detail {

inline std::set<std::string> head_set(std::span<const std::string> retrieved, std::size_t n) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < retrieved.size() && i < n; ++i) {
        out.insert(retrieved[i]);
    }
    return out;
}

inline std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const auto& x : a) {
        n += b.count(x);
    }
    return n;
}

}  // namespace detail

/// |golden ∩ retrieved[:k]| / |golden|.
inline double recall(const std::set<std::string>& golden, std::span<const std::string> retrieved, std::size_t k) {
    if (golden.empty()) {
        throw ValidationError("recall needs a non-empty golden set");
    }
    return static_cast<double>(detail::overlap(golden, detail::head_set(retrieved, k))) /
           static_cast<double>(golden.size());
}

/// 1 when any golden document is among the first n retrieved, else 0.
inline int hit_at_n(const std::set<std::string>& golden, std::span<const std::string> retrieved, std::size_t n) {
    if (golden.empty()) {
        throw ValidationError("hit_at_n needs a non-empty golden set");
    }
    for (std::size_t i = 0; i < retrieved.size() && i < n; ++i) {
        if (golden.count(retrieved[i]) > 0) {
            return 1;
        }
    }
    return 0;
}

/// |old ∩ new| / |old|; lower means the new retrieval diverges more.
inline double doc_set_similarity(const std::set<std::string>& old_retrieved, const std::set<std::string>& new_retrieved) {
    if (old_retrieved.empty()) {
        throw ValidationError("doc_set_similarity needs a non-empty old set");
    }
    return static_cast<double>(detail::overlap(old_retrieved, new_retrieved)) /
           static_cast<double>(old_retrieved.size());
}

// --- deterministic randomness -----------------------------------------------

/// mt19937_64 with hand-written draws, so sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    /// Uniform in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) {
            throw ValidationError("cannot draw from an empty range");
        }
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = gen_();
        while (x >= limit) {
            x = gen_();
        }
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

// --- synthetic corpus --------------------------------------------------------

/// Documents in topical clusters. Each sentence mixes document-specific,
/// cluster and corpus-wide vocabulary, so lexical and embedding evidence
/// overlaps between neighbours.
struct SyntheticCorpusSpec {
    std::size_t documents = 100;
    std::size_t clusters = 20;
    std::size_t paragraphs = 5;
    std::size_t paragraph_chars = 340;
    std::size_t doc_terms = 12;
    std::size_t cluster_terms = 16;
    std::size_t common_terms = 80;
    double p_doc = 0.15;
    double p_cluster = 0.35;
    std::uint64_t seed = 42;
};

struct SyntheticVocabulary {
    std::vector<std::vector<std::string>> doc_terms;      // per document
    std::vector<std::vector<std::string>> cluster_terms;  // per cluster
    std::vector<std::string> common_terms;
    std::vector<std::size_t> cluster_of;  // per document
};

namespace detail {

inline std::vector<std::string> pseudo_words(std::size_t n, Rng& rng) {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    while (out.size() < n) {
        std::string w;
        std::size_t syllables = 2 + rng.index(2);
        for (std::size_t s = 0; s < syllables; ++s) {
            w += consonants[rng.index(consonants.size())];
            w += vowels[rng.index(vowels.size())];
        }
        if (rng.chance(0.5)) {
            w += consonants[rng.index(consonants.size())];
        }
        if (!is_stop_word(w) && seen.insert(w).second) {
            out.push_back(std::move(w));
        }
    }
    return out;
}

}  // namespace detail

inline SyntheticVocabulary make_vocabulary(const SyntheticCorpusSpec& spec, Rng& rng) {
    if (spec.documents == 0 || spec.clusters == 0 || spec.clusters > spec.documents) {
        throw ValidationError("synthetic corpus needs 0 < clusters <= documents");
    }
    if (spec.doc_terms == 0 || spec.cluster_terms == 0 || spec.common_terms == 0 || spec.paragraphs == 0) {
        throw ValidationError("synthetic corpus vocabulary sizes must be positive");
    }
    std::size_t total = spec.documents * spec.doc_terms + spec.clusters * spec.cluster_terms + spec.common_terms;
    auto words = detail::pseudo_words(total, rng);
    SyntheticVocabulary v;
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
        std::vector<std::string> out(words.begin() + static_cast<std::ptrdiff_t>(at),
                                     words.begin() + static_cast<std::ptrdiff_t>(at + n));
        at += n;
        return out;
    };
    for (std::size_t d = 0; d < spec.documents; ++d) {
        v.doc_terms.push_back(take(spec.doc_terms));
        v.cluster_of.push_back(d % spec.clusters);
    }
    for (std::size_t c = 0; c < spec.clusters; ++c) {
        v.cluster_terms.push_back(take(spec.cluster_terms));
    }
    v.common_terms = take(spec.common_terms);
    return v;
}

inline std::string synthetic_doc_id(std::size_t d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "doc%03zu", d);
    return buf;
}

inline std::vector<Document> generate_corpus(const SyntheticCorpusSpec& spec = {}) {
    Rng rng(spec.seed);
    auto vocab = make_vocabulary(spec, rng);
    std::vector<Document> docs;
    for (std::size_t d = 0; d < spec.documents; ++d) {
        const auto& own = vocab.doc_terms[d];
        const auto& cluster = vocab.cluster_terms[vocab.cluster_of[d]];
        auto word = [&]() -> const std::string& {
            double r = rng.uniform();
            if (r < spec.p_doc) {
                return own[rng.index(own.size())];
            }
            if (r < spec.p_doc + spec.p_cluster) {
                return cluster[rng.index(cluster.size())];
            }
            return vocab.common_terms[rng.index(vocab.common_terms.size())];
        };
        Document doc;
        doc.doc_id = synthetic_doc_id(d);
        doc.title = cluster[0] + " " + own[0] + " " + own[1];
        std::vector<std::string> paragraphs;
        for (std::size_t p = 0; p < spec.paragraphs; ++p) {
            std::string para;
            while (para.size() < spec.paragraph_chars) {
                std::size_t n = 6 + rng.index(5);
                std::string sentence;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i > 0) {
                        sentence += ' ';
                    }
                    sentence += word();
                }
                sentence[0] = static_cast<char>(sentence[0] - 'a' + 'A');
                if (!para.empty()) {
                    para += ' ';
                }
                para += sentence + '.';
            }
            paragraphs.push_back(std::move(para));
        }
        doc.body = join(paragraphs, "\n\n");
        docs.push_back(std::move(doc));
    }
    return docs;
}

// --- labelled benchmark queries ----------------------------------------------

struct LabeledQuery {
    std::string query;
    std::string golden_doc;
    std::string source_chunk;
};

/// User-style queries drawn from a chunk: a few of its terms sampled by
/// frequency plus terms taken from a lexically close chunk of another
/// document, so that lexical and embedding evidence only partly point at the
/// source.
struct UserQuerySpec {
    std::size_t per_chunk = 4;
    std::size_t chunk_terms = 2;
    std::size_t confusers = 2;
    /// Confusers come from one of this many nearest chunks of other documents.
    std::size_t neighbours = 8;
    std::uint64_t seed = 7;
};

namespace detail {

/// Chunks of other documents ordered by keyword overlap (Jaccard), best first.
inline std::vector<std::vector<std::size_t>> nearest_foreign_chunks(std::span<const Chunk> chunks, std::size_t limit) {
    std::vector<std::vector<std::string>> kw;
    for (const auto& c : chunks) {
        auto k = extract_keywords(c.content);
        std::sort(k.begin(), k.end());
        kw.push_back(std::move(k));
    }
    std::vector<std::vector<std::size_t>> out(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t j = 0; j < chunks.size(); ++j) {
            if (chunks[j].doc_id == chunks[i].doc_id) {
                continue;
            }
            std::vector<std::string> common;
            std::set_intersection(kw[i].begin(), kw[i].end(), kw[j].begin(), kw[j].end(), std::back_inserter(common));
            double uni = static_cast<double>(kw[i].size() + kw[j].size() - common.size());
            scored.emplace_back(uni > 0 ? static_cast<double>(common.size()) / uni : 0.0, j);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (std::size_t k = 0; k < scored.size() && k < limit; ++k) {
            out[i].push_back(scored[k].second);
        }
    }
    return out;
}

}  // namespace detail

inline std::vector<LabeledQuery> generate_user_queries(std::span<const Chunk> chunks, const UserQuerySpec& spec = {}) {
    static constexpr std::string_view prefixes[] = {"how do i", "what is the", "why does the", "where is the",
                                                    "can you", ""};
    if (spec.per_chunk == 0 || spec.chunk_terms == 0 || spec.neighbours == 0) {
        throw ValidationError("user query sizes must be positive");
    }
    std::set<std::string_view> doc_ids;
    for (const auto& c : chunks) {
        doc_ids.insert(c.doc_id);
    }
    if (doc_ids.size() < 2) {
        throw ValidationError("user query generation needs chunks from at least two documents");
    }
    auto near = detail::nearest_foreign_chunks(chunks, spec.neighbours);
    Rng rng(spec.seed);
    std::vector<LabeledQuery> out;
    std::unordered_set<std::string> seen;
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
        const auto& c = chunks[ci];
        auto tokens = content_tokens(c.content);
        if (tokens.empty()) {
            continue;
        }
        auto own = extract_keywords(c.content);
        for (std::size_t q = 0, attempts = 0; q < spec.per_chunk && attempts < spec.per_chunk * 20; ++attempts) {
            std::vector<std::string> words;
            while (words.size() < spec.chunk_terms) {
                const auto& w = tokens[rng.index(tokens.size())];
                if (std::find(words.begin(), words.end(), w) == words.end() || words.size() >= own.size()) {
                    words.push_back(w);
                }
            }
            const auto& other = chunks[near[ci][rng.index(near[ci].size())]];
            auto foreign = extract_keywords(other.content);
            std::erase_if(foreign, [&](const std::string& w) { return std::find(own.begin(), own.end(), w) != own.end(); });
            if (foreign.empty()) {
                foreign = extract_keywords(other.content);
            }
            for (std::size_t k = 0; k < spec.confusers; ++k) {
                words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)),
                             foreign[rng.index(foreign.size())]);
            }
            std::string prefix(prefixes[rng.index(std::size(prefixes))]);
            std::string text = prefix.empty() ? join(words, " ") : prefix + " " + join(words, " ");
            if (seen.insert(text).second) {
                out.push_back({text, c.doc_id, c.chunk_id});
                ++q;
            }
        }
    }
    return out;
}

// --- engine configurations ---------------------------------------------------

/// One column of the comparison matrix: which indicator sources the engine
/// uses and at which admission threshold.
struct EngineVariant {
    std::string name;
    bool use_synthetic = false;
    bool use_feedback = false;
    double threshold = 0.75;
};

namespace detail {

inline std::string format_threshold(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", t);
    return buf;
}

}  // namespace detail

inline EngineVariant make_variant(bool synthetic, bool feedback, double threshold = 0.75) {
    EngineVariant v{"", synthetic, feedback, threshold};
    if (feedback) {
        v.name = "Feedback(" + detail::format_threshold(threshold) + ")";
        if (synthetic) {
            v.name += "+HyQE";
        }
    } else {
        v.name = synthetic ? "HyQE" : "Baseline";
    }
    return v;
}

/// Parses "baseline", "hyqe", "feedback", "feedback(0.95)", "feedback@0.95"
/// and '+'-joined combinations such as "feedback(0.75)+hyqe".
inline EngineVariant parse_variant(std::string_view text) {
    auto lower = to_lower_ascii(trim(text));
    bool synthetic = false;
    bool feedback = false;
    bool baseline = false;
    double threshold = 0.75;
    std::size_t start = 0;
    while (start <= lower.size()) {
        auto end = lower.find('+', start);
        auto part = std::string(trim(std::string_view(lower).substr(start, end - start)));
        if (part == "baseline") {
            baseline = true;
        } else if (part == "hyqe") {
            synthetic = true;
        } else if (part.rfind("feedback", 0) == 0) {
            feedback = true;
            auto rest = part.substr(8);
            if (!rest.empty()) {
                if (rest.front() == '@') {
                    rest = rest.substr(1);
                } else if (rest.front() == '(' && rest.back() == ')') {
                    rest = rest.substr(1, rest.size() - 2);
                } else {
                    throw ValidationError("bad engine variant '" + std::string(text) + "'");
                }
                try {
                    std::size_t used = 0;
                    threshold = std::stod(rest, &used);
                    if (used != rest.size()) {
                        throw std::invalid_argument(rest);
                    }
                } catch (const std::exception&) {
                    throw ValidationError("bad threshold in engine variant '" + std::string(text) + "'");
                }
                if (!(threshold > 0.0 && threshold <= 1.0)) {
                    throw ValidationError("threshold must lie in (0, 1]");
                }
            }
        } else {
            throw ValidationError("unknown engine variant '" + std::string(text) + "'");
        }
        if (end == std::string::npos) {
            break;
        }
        start = end + 1;
    }
    if (baseline && (synthetic || feedback)) {
        throw ValidationError("baseline cannot be combined with other variants");
    }
    return make_variant(synthetic, feedback, threshold);
}

inline std::vector<EngineVariant> default_variants() {
    return {make_variant(false, false), make_variant(true, false), make_variant(false, true, 0.75),
            make_variant(false, true, 0.95), make_variant(true, true, 0.75)};
}

// --- shared engine state -----------------------------------------------------

/// Everything the harnesses need that does not change between configurations:
/// the chunked corpus, its index without indicators and the synthetic
/// indicators generated from it.
struct EvalEngine {
    std::vector<Document> documents;
    std::vector<Chunk> chunks;
    DocumentCatalog catalog;
    SearchIndex base;
    std::vector<Indicator> synthetic;
    std::shared_ptr<const EmbeddingProvider> provider;
    std::size_t max_feedback_per_doc = 6;

    static EvalEngine build(std::vector<Document> docs, std::shared_ptr<const EmbeddingProvider> provider,
                            const SyntheticQueryProvider* synthetic_provider, std::size_t max_chunk_size = 400,
                            std::size_t max_feedback_per_doc = 6, Bm25Params params = {}) {
        EvalEngine e;
        e.documents = std::move(docs);
        e.chunks = chunk_corpus(e.documents, max_chunk_size);
        e.catalog = make_catalog(e.documents);
        e.provider = std::move(provider);
        e.max_feedback_per_doc = max_feedback_per_doc;
        e.base = SearchIndex::build(e.chunks, IndicatorRepository(max_feedback_per_doc), *e.provider, params);
        if (synthetic_provider != nullptr) {
            IndicatorRepository tmp(max_feedback_per_doc);
            add_synthetic_indicators(tmp, e.chunks, *synthetic_provider, *e.provider, e.catalog);
            e.synthetic = tmp.all();
        }
        return e;
    }

    /// Fresh repository for a variant, seeded with synthetic indicators when it uses them.
    IndicatorRepository repository(const EngineVariant& v) const {
        IndicatorRepository repo(max_feedback_per_doc);
        if (v.use_synthetic) {
            if (synthetic.empty()) {
                throw ValidationError("variant " + v.name + " needs synthetic indicators");
            }
            for (const auto& ind : synthetic) {
                repo.add_synthetic(ind);
            }
        }
        return repo;
    }

    RetrievalResult retrieve(const SearchIndex& index, const QueryBundle& bundle, RankerConfig cfg,
                             const EngineVariant& v) const {
        cfg.threshold = v.threshold;
        return retrieve_adaptive(index, bundle, cfg);
    }
};

// --- iterative-learning benchmark --------------------------------------------

struct SimulationConfig {
    std::size_t iterations = 200;
    std::size_t queries_per_iteration = 30;
    std::size_t new_per_iteration = 10;
    std::size_t repeated_per_iteration = 20;
    std::vector<std::size_t> hit_ns{3, 5, 7, 10};
    std::uint64_t seed = 1;
    RankerConfig ranker;
    /// Documents cited by a 1-star event: the first this many retrieved,
    /// 0 for all of them.
    std::size_t low_rating_citations = 0;

    void validate() const {
        if (iterations == 0) {
            throw ValidationError("iterations must be positive");
        }
        if (new_per_iteration + repeated_per_iteration != queries_per_iteration) {
            throw ValidationError("new + repeated queries must equal queries per iteration");
        }
        if (new_per_iteration == 0) {
            throw ValidationError("new_per_iteration must be positive");
        }
        ranker.validate();
    }
};

struct MetricRow {
    std::string config;
    std::size_t iteration = 0;
    std::string split;  // "old" or "new"
    std::string metric;
    std::size_t k = 0;
    double value = 0.0;
};

struct ScheduledQuery {
    std::size_t query = 0;  // index into the labelled query pool
    bool repeated = false;
};

/// The query stream shared by every configuration: iteration 0 issues only
/// new queries; later iterations add repeats drawn uniformly from all
/// distinct queries issued before.
inline std::vector<std::vector<ScheduledQuery>> make_schedule(std::size_t pool_size, const SimulationConfig& sim) {
    sim.validate();
    std::size_t needed = sim.iterations * sim.new_per_iteration;
    if (pool_size < needed) {
        throw ValidationError("query pool has " + std::to_string(pool_size) + " queries; the simulation needs " +
                              std::to_string(needed));
    }
    Rng rng(sim.seed);
    std::vector<std::size_t> order(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    std::vector<std::vector<ScheduledQuery>> schedule;
    std::vector<std::size_t> issued;
    std::size_t next = 0;
    for (std::size_t t = 0; t < sim.iterations; ++t) {
        std::vector<ScheduledQuery> round;
        if (!issued.empty()) {
            for (std::size_t r = 0; r < sim.repeated_per_iteration; ++r) {
                round.push_back({issued[rng.index(issued.size())], true});
            }
        }
        for (std::size_t n = 0; n < sim.new_per_iteration; ++n) {
            round.push_back({order[next++], false});
        }
        for (const auto& q : round) {
            if (!q.repeated) {
                issued.push_back(q.query);
            }
        }
        schedule.push_back(std::move(round));
    }
    return schedule;
}

struct BenchmarkResult {
    std::vector<MetricRow> rows;

    /// Mean over iterations of a per-iteration metric.
    std::optional<double> mean(std::string_view config, std::string_view split, std::string_view metric,
                               std::size_t k) const {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (r.config == config && r.split == split && r.metric == metric && r.k == k) {
                total += r.value;
                ++n;
            }
        }
        if (n == 0) {
            return std::nullopt;
        }
        return total / static_cast<double>(n);
    }
};

namespace detail {

struct QueryCache {
    const EmbeddingProvider& provider;
    std::unordered_map<std::string, QueryBundle> bundles;

    const QueryBundle& get(const std::string& q) {
        auto it = bundles.find(q);
        if (it == bundles.end()) {
            it = bundles.emplace(q, make_query_bundle(provider, q)).first;
        }
        return it->second;
    }
};

inline Timestamp logical_time(std::size_t iteration, std::size_t position) {
    return timestamp_from_unix(static_cast<std::int64_t>(iteration * 10000 + position));
}

}  // namespace detail

/// Runs the retrieve / rate / learn loop for each configuration on the same
/// query stream. 5-star feedback cites the golden document; 1-star feedback
/// cites the first retrieved documents. Feedback is ingested after each
/// iteration.
inline BenchmarkResult run_iterative_benchmark(const EvalEngine& engine, std::span<const LabeledQuery> pool,
                                               std::span<const EngineVariant> variants, const SimulationConfig& sim) {
    if (variants.empty()) {
        throw ValidationError("at least one engine configuration is required");
    }
    auto schedule = make_schedule(pool.size(), sim);
    detail::QueryCache cache{*engine.provider, {}};
    BenchmarkResult result;
    for (const auto& variant : variants) {
        auto repo = engine.repository(variant);
        auto index = engine.base.with_indicators(repo);
        for (std::size_t t = 0; t < schedule.size(); ++t) {
            struct Acc {
                double recall = 0.0;
                std::vector<double> hits;
                std::size_t n = 0;
            };
            std::map<std::string, Acc> acc;
            std::vector<FeedbackEvent> events;
            for (std::size_t i = 0; i < schedule[t].size(); ++i) {
                const auto& sq = schedule[t][i];
                const auto& lq = pool[sq.query];
                auto res = engine.retrieve(index, cache.get(lq.query), sim.ranker, variant);
                auto docs = ranked_documents(res.chunks);
                std::set<std::string> golden{lq.golden_doc};
                auto& a = acc[sq.repeated ? "old" : "new"];
                a.hits.resize(sim.hit_ns.size(), 0.0);
                a.recall += recall(golden, docs, sim.ranker.top_k);
                for (std::size_t h = 0; h < sim.hit_ns.size(); ++h) {
                    a.hits[h] += hit_at_n(golden, docs, sim.hit_ns[h]);
                }
                ++a.n;

                FeedbackEvent e;
                e.query = lq.query;
                e.timestamp = detail::logical_time(t, i);
                if (std::find(docs.begin(), docs.end(), lq.golden_doc) != docs.end()) {
                    e.star_rating = 5;
                    e.referenced_docs = {lq.golden_doc};
                } else if (!docs.empty()) {
                    e.star_rating = 1;
                    if (sim.low_rating_citations > 0 && docs.size() > sim.low_rating_citations) {
                        docs.resize(sim.low_rating_citations);
                    }
                    e.referenced_docs = docs;
                } else {
                    continue;
                }
                events.push_back(std::move(e));
            }
            for (const auto& [split, a] : acc) {
                double n = static_cast<double>(a.n);
                result.rows.push_back({variant.name, t, split, "recall", sim.ranker.top_k, a.recall / n});
                for (std::size_t h = 0; h < sim.hit_ns.size(); ++h) {
                    result.rows.push_back({variant.name, t, split, "hit", sim.hit_ns[h], a.hits[h] / n});
                }
            }
            if (variant.use_feedback) {
                for (const auto& e : events) {
                    ingest_feedback(repo, e, *engine.provider, engine.catalog);
                }
                index = engine.base.with_indicators(repo);
            }
        }
    }
    return result;
}

inline std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "config,iteration,split,metric,k,value\n";
    for (const auto& r : rows) {
        out << r.config << ',' << r.iteration << ',' << r.split << ',' << r.metric << ',' << r.k << ','
            << format_metric(r.value) << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

inline nlohmann::json to_json(const RankerConfig& c) {
    nlohmann::json j = {{"threshold", c.threshold},
                        {"top_k", c.top_k},
                        {"group_truncation", c.group_truncation},
                        {"expansion_target", c.expansion_target},
                        {"max_expansion_rounds", c.max_expansion_rounds},
                        {"rrf_constant", c.rrf_constant},
                        {"dense_fields", c.dense_fields},
                        {"dense_fetch", c.dense_fetch},
                        {"indicator_fetch", c.indicator_fetch},
                        {"max_inputs", c.max_inputs}};
    j["synthetic_threshold"] = c.synthetic_threshold ? nlohmann::json(*c.synthetic_threshold) : nlohmann::json();
    j["margin_percent"] = c.margin_percent ? nlohmann::json(*c.margin_percent) : nlohmann::json();
    return j;
}

inline nlohmann::json benchmark_manifest(const SimulationConfig& sim, std::span<const EngineVariant> variants,
                                         const EvalEngine& engine, std::size_t pool_size) {
    nlohmann::json vs = nlohmann::json::array();
    for (const auto& v : variants) {
        vs.push_back({{"name", v.name}, {"synthetic", v.use_synthetic}, {"feedback", v.use_feedback},
                      {"threshold", v.threshold}});
    }
    return {{"seed", sim.seed},
            {"iterations", sim.iterations},
            {"queries_per_iteration", sim.queries_per_iteration},
            {"new_per_iteration", sim.new_per_iteration},
            {"repeated_per_iteration", sim.repeated_per_iteration},
            {"hit_n", sim.hit_ns},
            {"low_rating_citations", sim.low_rating_citations},
            {"ranker", to_json(sim.ranker)},
            {"configs", vs},
            {"documents", engine.documents.size()},
            {"chunks", engine.chunks.size()},
            {"synthetic_indicators", engine.synthetic.size()},
            {"max_feedback_per_doc", engine.max_feedback_per_doc},
            {"embedding", engine.base.embedding_name()},
            {"query_pool", pool_size}};
}

// --- fine-grained scenarios --------------------------------------------------

struct ScenarioQuery {
    std::string query;
    std::optional<std::string> intent;
};

struct ScenarioSettings {
    std::vector<std::size_t> ks{3, 7, 12};
    /// vscore at which two queries count as similar.
    double similar_threshold = 0.9;
    /// Star ratings at or above / at or below which history counts as high / low.
    int high_min_stars = 4;
    int low_max_stars = 2;
    RankerConfig ranker;
};

struct ScenarioRow {
    std::string scenario;
    std::string config;
    std::string metric;
    std::size_t k = 0;
    double value = 0.0;
    std::size_t queries = 0;
};

struct ScenarioSlices {
    std::vector<const FeedbackEvent*> exact_high;
    std::vector<const FeedbackEvent*> exact_low;
    std::vector<std::pair<ScenarioQuery, const FeedbackEvent*>> similar_high;
    std::vector<ScenarioQuery> unseen;
};

/// Splits history and probe queries into the four scenario slices. A probe
/// query is "similar" when its vscore reaches the threshold against exactly
/// one high-rated history query, and "unseen" when it reaches it against none.
inline ScenarioSlices slice_scenarios(std::span<const FeedbackEvent> history, std::span<const ScenarioQuery> probes,
                                      const EmbeddingProvider& provider, const ScenarioSettings& s) {
    ScenarioSlices out;
    std::vector<const FeedbackEvent*> high;
    std::vector<Embedding> history_emb;
    std::unordered_set<std::string> history_text;
    for (const auto& e : history) {
        validate(e);
        history_emb.push_back(embed(provider, e.query));
        history_text.insert(e.query);
        if (e.star_rating >= s.high_min_stars) {
            out.exact_high.push_back(&e);
        } else if (e.star_rating <= s.low_max_stars) {
            out.exact_low.push_back(&e);
        }
    }
    for (const auto& p : probes) {
        if (history_text.count(p.query) > 0) {
            continue;
        }
        auto q = embed(provider, p.query);
        std::size_t similar_any = 0;
        std::vector<const FeedbackEvent*> similar_high;
        for (std::size_t i = 0; i < history.size(); ++i) {
            if (vscore(q, history_emb[i]) >= s.similar_threshold) {
                ++similar_any;
                if (history[i].star_rating >= s.high_min_stars) {
                    similar_high.push_back(&history[i]);
                }
            }
        }
        if (similar_any == 0) {
            out.unseen.push_back(p);
        } else if (similar_high.size() == 1 && similar_any == 1) {
            out.similar_high.emplace_back(p, similar_high.front());
        }
    }
    return out;
}

inline std::set<std::string> as_set(std::span<const std::string> v) { return {v.begin(), v.end()}; }

/// Replays history into each configuration and measures the scenario
/// metrics: recall@k against the cited documents for the high-rated slices,
/// overlap with the previously cited documents for the low-rated slice and
/// overlap with Baseline for unseen queries.
inline std::vector<ScenarioRow> run_scenarios(const EvalEngine& engine, std::span<const FeedbackEvent> history,
                                              std::span<const ScenarioQuery> probes,
                                              std::span<const EngineVariant> variants, const ScenarioSettings& s) {
    if (variants.empty()) {
        throw ValidationError("at least one engine configuration is required");
    }
    if (s.ks.empty()) {
        throw ValidationError("at least one k is required");
    }
    for (const auto& e : history) {
        for (const auto& d : e.referenced_docs) {
            if (engine.catalog.find(d) == engine.catalog.end()) {
                throw ValidationError("history references unknown document '" + d + "'");
            }
        }
    }
    auto slices = slice_scenarios(history, probes, *engine.provider, s);
    detail::QueryCache cache{*engine.provider, {}};
    auto bundle_of = [&](const std::string& q, const std::optional<std::string>& intent) {
        if (!intent) {
            return cache.get(q);
        }
        return make_query_bundle(*engine.provider, q, *intent);
    };

    std::vector<ScenarioRow> rows;
    auto note_empty = [](const char* name, std::size_t n) {
        if (n == 0) {
            spdlog::warn("scenario '{}' has no queries; skipped", name);
        }
    };
    note_empty("exact_high", slices.exact_high.size());
    note_empty("exact_low", slices.exact_low.size());
    note_empty("similar_high", slices.similar_high.size());
    note_empty("unseen", slices.unseen.size());

    std::map<std::size_t, std::vector<std::set<std::string>>> baseline_unseen;
    if (!slices.unseen.empty()) {
        auto bl = engine.base.with_indicators(IndicatorRepository(engine.max_feedback_per_doc));
        for (auto k : s.ks) {
            auto cfg = s.ranker;
            cfg.top_k = k;
            for (const auto& p : slices.unseen) {
                auto res = retrieve_adaptive(bl, bundle_of(p.query, p.intent), cfg);
                auto docs = ranked_documents(res.chunks);
                baseline_unseen[k].push_back(as_set(docs));
            }
        }
    }

    for (const auto& v : variants) {
        auto repo = engine.repository(v);
        if (v.use_feedback) {
            for (const auto& e : history) {
                ingest_feedback(repo, e, *engine.provider, engine.catalog);
            }
        }
        auto index = engine.base.with_indicators(repo);
        for (auto k : s.ks) {
            auto cfg = s.ranker;
            cfg.top_k = k;
            cfg.threshold = v.threshold;
            auto docs_for = [&](const std::string& q, const std::optional<std::string>& intent) {
                auto res = retrieve_adaptive(index, bundle_of(q, intent), cfg);
                return ranked_documents(res.chunks);
            };
            if (!slices.exact_high.empty()) {
                double total = 0.0;
                for (const auto* e : slices.exact_high) {
                    total += recall(as_set(e->referenced_docs), docs_for(e->query, e->rewritten_intent), k);
                }
                rows.push_back({"exact_high", v.name, "recall", k, total / slices.exact_high.size(),
                                slices.exact_high.size()});
            }
            if (!slices.exact_low.empty()) {
                double total = 0.0;
                for (const auto* e : slices.exact_low) {
                    total += doc_set_similarity(as_set(e->referenced_docs),
                                                as_set(docs_for(e->query, e->rewritten_intent)));
                }
                rows.push_back({"exact_low", v.name, "doc_set_similarity", k, total / slices.exact_low.size(),
                                slices.exact_low.size()});
            }
            if (!slices.similar_high.empty()) {
                double total = 0.0;
                for (const auto& [p, e] : slices.similar_high) {
                    total += recall(as_set(e->referenced_docs), docs_for(p.query, p.intent), k);
                }
                rows.push_back({"similar_high", v.name, "recall", k, total / slices.similar_high.size(),
                                slices.similar_high.size()});
            }
            if (!slices.unseen.empty()) {
                double total = 0.0;
                std::size_t n = 0;
                for (std::size_t i = 0; i < slices.unseen.size(); ++i) {
                    const auto& old = baseline_unseen[k][i];
                    if (old.empty()) {
                        continue;
                    }
                    total += doc_set_similarity(old, as_set(docs_for(slices.unseen[i].query, slices.unseen[i].intent)));
                    ++n;
                }
                if (n > 0) {
                    rows.push_back({"unseen", v.name, "baseline_similarity", k, total / n, n});
                }
            }
        }
    }
    return rows;
}

inline void write_scenarios_csv(const std::filesystem::path& path, std::span<const ScenarioRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "scenario,config,metric,k,value,queries\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.config << ',' << r.metric << ',' << r.k << ',' << format_metric(r.value) << ','
            << r.queries << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace fbrank
