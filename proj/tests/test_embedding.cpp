#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fbrank {
namespace {

/// Standalone hashed bag-of-words: FNV-1a 64 of the token, splitmix64
/// finalizer, low bit picks the sign, the rest picks the slot.
std::pair<std::size_t, double> oracle_slot(const std::string& token, std::size_t dim) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t x = h + 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return {static_cast<std::size_t>((x >> 1) % dim), (x & 1U) != 0 ? 1.0 : -1.0};
}

std::vector<double> oracle_embed(const std::vector<std::string>& tokens, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    for (const auto& t : tokens) {
        auto [slot, sign] = oracle_slot(t, dim);
        v[slot] += sign;
    }
    double n = 0.0;
    for (double x : v) {
        n += x * x;
    }
    for (double& x : v) {
        x /= std::sqrt(n);
    }
    return v;
}

std::vector<std::string> word_sample(std::size_t n) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::mt19937_64 gen(99);
    while (out.size() < n) {
        std::string w;
        auto len = 3 + gen() % 6;
        for (std::size_t i = 0; i < len; ++i) {
            w.push_back(static_cast<char>('a' + gen() % 26));
        }
        if (!is_stop_word(w) && seen.insert(w).second) {
            out.push_back(w);
        }
    }
    return out;
}

TEST(Vscore, ReferencePoints) {
    Embedding a({1.0, 0.0});
    Embedding b({0.0, 2.0});
    Embedding neg({-3.0, 0.0});
    EXPECT_DOUBLE_EQ(vscore(a, a), 1.0);
    EXPECT_DOUBLE_EQ(vscore(a, b), 0.5);
    EXPECT_NEAR(vscore(a, neg), 1.0 / 3.0, 1e-15);
}

TEST(Vscore, ScaleInvariantAndSymmetric) {
    Embedding a({0.3, -1.2, 2.0});
    Embedding b({1.1, 0.4, -0.7});
    Embedding a2({0.3 * 7.5, -1.2 * 7.5, 2.0 * 7.5});
    Embedding b2({1.1 * 0.01, 0.4 * 0.01, -0.7 * 0.01});
    EXPECT_NEAR(vscore(a, b), vscore(a2, b2), 1e-12);
    EXPECT_DOUBLE_EQ(vscore(a, b), vscore(b, a));
}

TEST(Vscore, Errors) {
    EXPECT_THROW(vscore(Embedding({1.0}), Embedding({1.0, 0.0})), ValidationError);
    EXPECT_THROW(vscore(Embedding({0.0, 0.0}), Embedding({1.0, 0.0})), ValidationError);
}

TEST(HashingProvider, DeterministicAndSized) {
    HashingEmbeddingProvider p;
    auto a = embed(p, "abc");
    auto b = embed(p, "abc");
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.dim(), 256U);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    EXPECT_NE(embed(p, "abc"), embed(p, "xyz"));
}

TEST(HashingProvider, EmptyTextIsAnError) {
    HashingEmbeddingProvider p;
    EXPECT_THROW(embed(p, ""), ValidationError);
    EXPECT_THROW(embed(p, "   "), ValidationError);
    EXPECT_THROW(HashingEmbeddingProvider(0), ValidationError);
}

TEST(HashingProvider, MatchesStandaloneOracle) {
    HashingEmbeddingProvider p(64);
    for (const std::string text : {"restart the sql server", "Vacuum reclaims storage", "a b c d e f g",
                                   "server server server logs"}) {
        auto expected = oracle_embed(content_tokens(text), 64);
        auto got = embed(p, text).vector();
        ASSERT_EQ(got.size(), expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_NEAR(got[i], expected[i], 1e-12) << text << " slot " << i;
        }
    }
}

TEST(HashingProvider, CollisionsOverThousandWordsMatchOracle) {
    // One token maps to one signed slot, so two words collide exactly when the
    // oracle gives them the same (slot, sign).
    HashingEmbeddingProvider p;
    auto words = word_sample(1000);
    std::map<std::vector<double>, std::size_t> seen;
    std::map<std::pair<std::size_t, double>, std::size_t> oracle_seen;
    std::size_t collisions = 0;
    std::size_t oracle_collisions = 0;
    for (const auto& w : words) {
        collisions += seen[embed(p, w).vector()]++;
        oracle_collisions += oracle_seen[oracle_slot(w, 256)]++;
    }
    EXPECT_EQ(collisions, oracle_collisions);
    // birthday expectation: C(1000, 2) / 512 ~ 975 colliding pairs
    EXPECT_GT(collisions, 700U);
    EXPECT_LT(collisions, 1300U);
}

TEST(HashingProvider, SharedTokensRaiseCosine) {
    HashingEmbeddingProvider p;
    auto words = word_sample(600);
    std::mt19937_64 gen(5);
    auto pick = [&](std::size_t from, std::size_t to, std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(words[from + gen() % (to - from)]);
        }
        return out;
    };
    double shared = 0.0;
    double disjoint = 0.0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        auto base = pick(0, 200, 6);
        auto overlap = base;
        auto extra = pick(200, 400, 3);
        std::copy(extra.begin(), extra.end(), overlap.begin() + 3);
        auto other = pick(400, 600, 6);
        auto e = embed(p, join(base, " "));
        shared += cosine(e, embed(p, join(overlap, " ")));
        disjoint += cosine(e, embed(p, join(other, " ")));
    }
    EXPECT_GT(shared / trials, 0.35);
    EXPECT_LT(std::abs(disjoint / trials), 0.05);
}

class CountingProvider final : public EmbeddingProvider {
  public:
    std::size_t dim() const override { return inner.dim(); }
    std::string name() const override { return inner.name(); }
    Embedding embed_text(std::string_view text) const override {
        ++calls;
        return inner.embed_text(text);
    }
    HashingEmbeddingProvider inner{32};
    mutable std::size_t calls = 0;
};

TEST(CachedProvider, PersistsAcrossInstances) {
    auto dir = testing::scratch_dir("embedding_cache");
    auto inner = std::make_shared<CountingProvider>();
    {
        CachedEmbeddingProvider cache(inner, dir / "cache.jsonl");
        auto a = embed(cache, "hello world");
        auto b = embed(cache, "hello world");
        EXPECT_EQ(a, b);
        EXPECT_EQ(inner->calls, 1U);
        EXPECT_EQ(cache.cached_entries(), 1U);
    }
    CachedEmbeddingProvider again(inner, dir / "cache.jsonl");
    EXPECT_EQ(again.cached_entries(), 1U);
    EXPECT_EQ(embed(again, "hello world"), embed(inner->inner, "hello world"));
    EXPECT_EQ(inner->calls, 1U);
    auto line = testing::read_file(dir / "cache.jsonl");
    EXPECT_NE(line.find("\"dim\":32"), std::string::npos);
}

}  // namespace
}  // namespace fbrank
