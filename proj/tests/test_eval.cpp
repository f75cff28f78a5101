#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fbrank {
namespace {

using Set = std::set<std::string>;
using List = std::vector<std::string>;

TEST(Metrics, RecallExamples) {
    EXPECT_DOUBLE_EQ(recall({"a", "b"}, List{"a", "c"}, 2), 0.5);
    EXPECT_DOUBLE_EQ(recall({"a", "b"}, List{"b", "x", "a"}, 3), 1.0);
    EXPECT_DOUBLE_EQ(recall({"a", "b"}, List{"x", "y"}, 2), 0.0);
    EXPECT_DOUBLE_EQ(recall({"a"}, List{"x", "a"}, 1), 0.0);
    EXPECT_THROW(recall({}, List{"a"}, 1), ValidationError);
}

TEST(Metrics, HitExamples) {
    EXPECT_EQ(hit_at_n({"d1"}, List{"x", "d1", "y"}, 3), 1);
    EXPECT_EQ(hit_at_n({"d1"}, List{"x", "d1", "y"}, 1), 0);
    EXPECT_EQ(hit_at_n({"d1"}, List{}, 5), 0);
    EXPECT_THROW(hit_at_n({}, List{"a"}, 1), ValidationError);
}

TEST(Metrics, DocSetSimilarityExamples) {
    EXPECT_DOUBLE_EQ(doc_set_similarity({"a", "b"}, {"b", "a"}), 1.0);
    EXPECT_DOUBLE_EQ(doc_set_similarity({"a", "b"}, {"c"}), 0.0);
    EXPECT_DOUBLE_EQ(doc_set_similarity({"a", "b", "c", "d"}, {"a", "x", "y", "z"}), 0.25);
    EXPECT_THROW(doc_set_similarity({}, {"a"}), ValidationError);
}

TEST(Metrics, MonotoneInCutoff) {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        Set golden;
        List retrieved;
        for (int i = 0; i < 6; ++i) {
            golden.insert("d" + std::to_string(rng.index(12)));
            retrieved.push_back("d" + std::to_string(rng.index(12)));
        }
        for (std::size_t k = 1; k < 8; ++k) {
            EXPECT_LE(recall(golden, retrieved, k), recall(golden, retrieved, k + 1));
            EXPECT_LE(hit_at_n(golden, retrieved, k), hit_at_n(golden, retrieved, k + 1));
            if (hit_at_n(golden, retrieved, k) == 1) {
                EXPECT_GT(recall(golden, retrieved, k), 0.0);
            }
        }
    }
}

TEST(Rng, DeterministicAndInRange) {
    Rng a(11);
    Rng b(11);
    for (int i = 0; i < 1000; ++i) {
        auto x = a.index(7);
        EXPECT_EQ(x, b.index(7));
        EXPECT_LT(x, 7U);
        double u = a.uniform();
        EXPECT_EQ(u, b.uniform());
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Variants, ParseForms) {
    EXPECT_EQ(parse_variant("baseline").name, "Baseline");
    EXPECT_EQ(parse_variant("HyQE").name, "HyQE");
    auto f = parse_variant("feedback");
    EXPECT_TRUE(f.use_feedback);
    EXPECT_FALSE(f.use_synthetic);
    EXPECT_EQ(f.name, "Feedback(0.75)");
    EXPECT_DOUBLE_EQ(parse_variant("feedback(0.95)").threshold, 0.95);
    EXPECT_DOUBLE_EQ(parse_variant("feedback@0.9").threshold, 0.9);
    auto both = parse_variant(" Feedback(0.75) + hyqe ");
    EXPECT_EQ(both.name, "Feedback(0.75)+HyQE");
    EXPECT_TRUE(both.use_synthetic);
    EXPECT_THROW(parse_variant("magic"), ValidationError);
    EXPECT_THROW(parse_variant("feedback(2)"), ValidationError);
    EXPECT_THROW(parse_variant("feedback(x)"), ValidationError);
    EXPECT_THROW(parse_variant("baseline+hyqe"), ValidationError);
    EXPECT_EQ(default_variants().size(), 5U);
}

TEST(SyntheticCorpus, DeterministicShape) {
    auto a = generate_corpus();
    auto b = generate_corpus();
    ASSERT_EQ(a.size(), 100U);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].body, b[i].body);
        EXPECT_EQ(a[i].doc_id, synthetic_doc_id(i));
    }
    auto chunks = chunk_corpus(a, 400);
    EXPECT_GE(chunks.size(), 400U);
    EXPECT_LE(chunks.size(), 600U);
    SyntheticCorpusSpec other;
    other.seed = 43;
    EXPECT_NE(generate_corpus(other)[0].body, a[0].body);
    SyntheticCorpusSpec bad;
    bad.clusters = 0;
    EXPECT_THROW(generate_corpus(bad), ValidationError);
}

TEST(UserQueries, LabelledBySourceDocument) {
    auto docs = generate_corpus({.documents = 20, .clusters = 4});
    auto chunks = chunk_corpus(docs, 400);
    auto queries = generate_user_queries(chunks);
    EXPECT_GE(queries.size(), chunks.size() * 3);
    std::set<std::string> seen;
    for (const auto& q : queries) {
        EXPECT_TRUE(seen.insert(q.query).second) << "duplicate " << q.query;
        EXPECT_EQ(doc_id_of_chunk(q.source_chunk), q.golden_doc);
        EXPECT_FALSE(trim(q.query).empty());
    }
    auto again = generate_user_queries(chunks);
    ASSERT_EQ(again.size(), queries.size());
    EXPECT_EQ(again.back().query, queries.back().query);
}

TEST(Schedule, NewThenRepeats) {
    SimulationConfig sim;
    sim.iterations = 5;
    auto schedule = make_schedule(60, sim);
    ASSERT_EQ(schedule.size(), 5U);
    EXPECT_EQ(schedule[0].size(), 10U);
    std::set<std::size_t> issued;
    for (std::size_t t = 0; t < schedule.size(); ++t) {
        std::size_t repeats = 0;
        for (const auto& q : schedule[t]) {
            if (q.repeated) {
                ++repeats;
                EXPECT_EQ(issued.count(q.query), 1U);
            }
        }
        for (const auto& q : schedule[t]) {
            if (!q.repeated) {
                EXPECT_TRUE(issued.insert(q.query).second);
            }
        }
        EXPECT_EQ(repeats, t == 0 ? 0U : 20U);
    }
    EXPECT_THROW(make_schedule(49, sim), ValidationError);
    sim.repeated_per_iteration = 5;
    EXPECT_THROW(make_schedule(60, sim), ValidationError);
}

class EvalFixture : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        synth_ = new TemplateQueryProvider(5);
        engine_ = new EvalEngine(EvalEngine::build(generate_corpus({.documents = 50, .clusters = 10}),
                                                   std::make_shared<HashingEmbeddingProvider>(), synth_));
        pool_ = new std::vector<LabeledQuery>(generate_user_queries(engine_->chunks));
    }
    static void TearDownTestSuite() {
        delete pool_;
        delete engine_;
        delete synth_;
    }
    static TemplateQueryProvider* synth_;
    static EvalEngine* engine_;
    static std::vector<LabeledQuery>* pool_;
};

TemplateQueryProvider* EvalFixture::synth_ = nullptr;
EvalEngine* EvalFixture::engine_ = nullptr;
std::vector<LabeledQuery>* EvalFixture::pool_ = nullptr;

TEST_F(EvalFixture, RepositoryPerVariant) {
    EXPECT_TRUE(engine_->repository(make_variant(false, false)).empty());
    EXPECT_EQ(engine_->repository(make_variant(true, true)).synthetic_count(), engine_->chunks.size() * 5);
}

TEST_F(EvalFixture, CorrectAnswerIsRecalledWhenRepeated) {
    auto variant = make_variant(false, true, 0.75);
    auto repo = engine_->repository(variant);
    auto index = engine_->base.with_indicators(repo);
    RankerConfig cfg;
    auto docs_of = [&](const SearchIndex& idx, const std::string& q) {
        return ranked_documents(engine_->retrieve(idx, make_query_bundle(*engine_->provider, q), cfg, variant).chunks);
    };
    std::vector<const LabeledQuery*> answered;
    Rng rng(21);
    std::size_t t = 0;
    // rounds of ten queries, rated and ingested in batch as the benchmark does
    for (std::size_t round = 0; round < 8; ++round) {
        std::vector<FeedbackEvent> events;
        for (int i = 0; i < 10; ++i) {
            const auto& lq = (*pool_)[rng.index(pool_->size())];
            auto docs = docs_of(index, lq.query);
            FeedbackEvent e{lq.query, std::nullopt, 5, {lq.golden_doc}, timestamp_from_unix(static_cast<std::int64_t>(++t))};
            if (std::find(docs.begin(), docs.end(), lq.golden_doc) != docs.end()) {
                answered.push_back(&lq);
            } else {
                e.star_rating = 1;
                e.referenced_docs = docs;
            }
            events.push_back(e);
        }
        for (const auto& e : events) {
            ingest_feedback(repo, e, *engine_->provider, engine_->catalog);
        }
        index = engine_->base.with_indicators(repo);
    }
    ASSERT_GT(answered.size(), 20U);
    std::size_t checked = 0;
    for (const auto* lq : answered) {
        const auto& list = repo.by_document().at(lq->golden_doc);
        bool survives = std::any_of(list.begin(), list.end(),
                                    [&](const Indicator& i) { return i.query == lq->query && i.signal > 0; });
        if (!survives) {
            continue;
        }
        ++checked;
        EXPECT_EQ(recall({lq->golden_doc}, docs_of(index, lq->query), cfg.top_k), 1.0) << lq->query;
    }
    EXPECT_GT(checked, 15U);
}

TEST_F(EvalFixture, BenchmarkIsReproducible) {
    SimulationConfig sim;
    sim.iterations = 4;
    std::vector<EngineVariant> variants{make_variant(false, false), make_variant(true, true)};
    auto a = run_iterative_benchmark(*engine_, *pool_, variants, sim);
    auto b = run_iterative_benchmark(*engine_, *pool_, variants, sim);
    auto dir = testing::scratch_dir("bench_repro");
    write_metrics_csv(dir / "a.csv", a.rows);
    write_metrics_csv(dir / "b.csv", b.rows);
    auto text = testing::read_file(dir / "a.csv");
    EXPECT_EQ(text, testing::read_file(dir / "b.csv"));
    EXPECT_EQ(text.substr(0, text.find('\n')), "config,iteration,split,metric,k,value");
    // iteration 0 has only new queries; each later one has both splits
    std::size_t per_config = 1 * 5 + 3 * 10;
    EXPECT_EQ(a.rows.size(), 2 * per_config);
    EXPECT_TRUE(a.mean("Baseline", "old", "recall", 10).has_value());
    EXPECT_FALSE(a.mean("HyQE", "old", "recall", 10).has_value());
    for (const auto& r : a.rows) {
        EXPECT_GE(r.value, 0.0);
        EXPECT_LE(r.value, 1.0);
    }
}

TEST_F(EvalFixture, BaselineIgnoresFeedback) {
    SimulationConfig sim;
    sim.iterations = 3;
    std::vector<EngineVariant> baseline{make_variant(false, false)};
    auto res = run_iterative_benchmark(*engine_, *pool_, baseline, sim);
    // Baseline results depend only on the query, so a query's recall never changes.
    auto schedule = make_schedule(pool_->size(), sim);
    RankerConfig cfg;
    auto index = engine_->base;
    double expected = 0.0;
    for (const auto& q : schedule[2]) {
        if (!q.repeated) {
            const auto& lq = (*pool_)[q.query];
            auto docs = ranked_documents(retrieve_adaptive(index, make_query_bundle(*engine_->provider, lq.query), cfg).chunks);
            expected += recall({lq.golden_doc}, docs, cfg.top_k);
        }
    }
    for (const auto& r : res.rows) {
        if (r.iteration == 2 && r.split == "new" && r.metric == "recall") {
            EXPECT_NEAR(r.value, expected / 10.0, 1e-12);
        }
    }
}

TEST_F(EvalFixture, ScenariosOnSmallHistory) {
    std::vector<FeedbackEvent> history;
    for (std::size_t i = 0; i < 6; ++i) {
        const auto& lq = (*pool_)[i * 13];
        history.push_back({lq.query, std::nullopt, i % 2 == 0 ? 5 : 1, {lq.golden_doc},
                           timestamp_from_unix(static_cast<std::int64_t>(i))});
    }
    std::vector<ScenarioQuery> probes{{"completely unrelated zebra question", std::nullopt},
                                      {history[0].query + " the", std::nullopt}};
    ScenarioSettings s;
    auto variants = std::vector<EngineVariant>{make_variant(false, false), make_variant(false, true)};
    auto slices = slice_scenarios(history, probes, *engine_->provider, s);
    EXPECT_EQ(slices.exact_high.size(), 3U);
    EXPECT_EQ(slices.exact_low.size(), 3U);
    EXPECT_EQ(slices.unseen.size(), 1U);
    ASSERT_EQ(slices.similar_high.size(), 1U);
    EXPECT_EQ(slices.similar_high[0].second, &history[0]);

    auto rows = run_scenarios(*engine_, history, probes, variants, s);
    for (const auto& r : rows) {
        if (r.scenario == "exact_high" && r.config == "Feedback(0.75)") {
            EXPECT_EQ(r.value, 1.0) << "k=" << r.k;
        }
        if (r.scenario == "exact_low" && r.config == "Feedback(0.75)") {
            EXPECT_EQ(r.value, 0.0) << "k=" << r.k;
        }
        if (r.scenario == "unseen" && r.config == "Baseline") {
            EXPECT_EQ(r.value, 1.0);
        }
    }
    EXPECT_EQ(rows.size(), 2U * 3U * 4U);
    auto dir = testing::scratch_dir("scenarios_csv");
    write_scenarios_csv(dir / "s.csv", rows);
    EXPECT_EQ(testing::read_file(dir / "s.csv").rfind("scenario,config,metric,k,value,queries\n", 0), 0U);

    std::vector<FeedbackEvent> bad{{"q", std::nullopt, 5, {"no-such-doc"}, {}}};
    EXPECT_THROW(run_scenarios(*engine_, bad, probes, variants, s), ValidationError);
}

}  // namespace
}  // namespace fbrank
