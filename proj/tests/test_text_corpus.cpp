#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "test_util.hpp"

namespace fbrank {
namespace {

using testing::doc;

std::string strip_space(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (!is_space(c)) {
            out.push_back(c);
        }
    }
    return out;
}

/// Independent oracle: chunks must appear in the body in order, separated
/// only by whitespace, and cover it completely.
void expect_reconstructs(const Document& d, const std::vector<Chunk>& chunks) {
    std::size_t pos = 0;
    for (const auto& c : chunks) {
        auto at = d.body.find(c.content, pos);
        ASSERT_NE(at, std::string::npos) << c.chunk_id;
        EXPECT_EQ(strip_space(d.body.substr(pos, at - pos)), "") << "content lost before " << c.chunk_id;
        pos = at + c.content.size();
    }
    EXPECT_EQ(strip_space(d.body.substr(pos)), "");
    std::string joined;
    for (const auto& c : chunks) {
        joined += c.content;
    }
    EXPECT_EQ(strip_space(joined), strip_space(d.body));
}

TEST(Text, TokenizeLowercasesAndSplitsOnPunctuation) {
    EXPECT_EQ(tokenize("Hello, World! SQL-server 42"),
              (std::vector<std::string>{"hello", "world", "sql", "server", "42"}));
    EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(Text, ExtractKeywordsExamples) {
    EXPECT_EQ(extract_keywords("How do I restart the SQL server"),
              (std::vector<std::string>{"restart", "sql", "server"}));
    EXPECT_TRUE(extract_keywords("").empty());
    EXPECT_TRUE(extract_keywords("the the the").empty());
    EXPECT_EQ(extract_keywords("Server restart, then server logs"),
              (std::vector<std::string>{"server", "restart", "logs"}));
}

TEST(Text, TrimAndJoin) {
    EXPECT_EQ(trim("  a b \n"), "a b");
    EXPECT_EQ(join({"a", "b", "c"}, ","), "a,b,c");
    EXPECT_EQ(utf8_length("caf\xC3\xA9"), 4U);
}

TEST(Chunking, SmallBodyIsOneChunk) {
    auto chunks = chunk_document(doc("d", "T", "A.\n\nB."), 100);
    ASSERT_EQ(chunks.size(), 1U);
    EXPECT_EQ(chunks[0].content, "A.\n\nB.");
    EXPECT_EQ(chunks[0].chunk_id, "d#0");
    EXPECT_EQ(chunks[0].title, "T");
}

TEST(Chunking, ParagraphBoundarySplit) {
    auto chunks = chunk_document(doc("d", "T", "A.\n\nB."), 3);
    ASSERT_EQ(chunks.size(), 2U);
    EXPECT_EQ(chunks[0].content, "A.");
    EXPECT_EQ(chunks[1].content, "B.");
    EXPECT_EQ(chunks[1].chunk_id, "d#1");
    EXPECT_EQ(chunks[1].ordinal, 1U);
}

TEST(Chunking, PrefersSentenceEndsOverHardSplits) {
    auto chunks = chunk_document(doc("d", "", "One two three. Four five six."), 16);
    ASSERT_EQ(chunks.size(), 2U);
    EXPECT_EQ(chunks[0].content, "One two three.");
    EXPECT_EQ(chunks[1].content, "Four five six.");
}

TEST(Chunking, HardSplitWhenNoBoundaryFits) {
    auto chunks = chunk_document(doc("d", "", "abcdefghij"), 4);
    ASSERT_EQ(chunks.size(), 3U);
    EXPECT_EQ(chunks[0].content, "abcd");
    EXPECT_EQ(chunks[2].content, "ij");
}

TEST(Chunking, TenKilobyteBodyReconcatenates) {
    std::string body;
    for (int p = 0; body.size() < 10000; ++p) {
        for (int s = 0; s < 7; ++s) {
            body += "Sentence " + std::to_string(p) + "." + std::to_string(s) + " talks about topic " +
                    std::to_string(p * 7 + s) + " in some detail. ";
        }
        body += "\n\n";
    }
    auto d = doc("big", "Big", body);
    auto chunks = chunk_document(d, 2000);
    EXPECT_GE(chunks.size(), 5U);
    for (const auto& c : chunks) {
        EXPECT_LE(c.content_length, 2000U);
        EXPECT_EQ(c.content_length, utf8_length(c.content));
    }
    expect_reconstructs(d, chunks);
}

TEST(Chunking, MultibyteCharactersAreNeverCut) {
    std::string body;
    for (int i = 0; i < 50; ++i) {
        body += "\xC3\xA9";
    }
    auto chunks = chunk_document(doc("u", "", body), 7);
    for (const auto& c : chunks) {
        EXPECT_LE(c.content_length, 7U);
        EXPECT_EQ(c.content.size() % 2, 0U);
    }
    expect_reconstructs(doc("u", "", body), chunks);
}

TEST(Chunking, HeadingFoldsIntoTitle) {
    auto chunks = chunk_document(doc("d", "Guide", "# Setup\nInstall it.\n\n# Usage\nRun it."), 20);
    ASSERT_EQ(chunks.size(), 2U);
    EXPECT_EQ(chunks[0].title, "Guide / Setup");
    EXPECT_EQ(chunks[1].title, "Guide / Usage");
}

TEST(Chunking, Deterministic) {
    auto d = testing::tiny_corpus()[0];
    auto a = chunk_document(d, 30);
    auto b = chunk_document(d, 30);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].chunk_id, b[i].chunk_id);
        EXPECT_EQ(a[i].content, b[i].content);
    }
}

TEST(Chunking, Errors) {
    EXPECT_THROW(chunk_document(doc("d", "", ""), 10), ValidationError);
    EXPECT_THROW(chunk_document(doc("d", "", " \n\n "), 10), ValidationError);
    EXPECT_THROW(chunk_document(doc("d", "", "x"), 0), ValidationError);
}

TEST(Corpus, ChunkIdRoundTrip) {
    EXPECT_EQ(make_chunk_id("a#b", 3), "a#b#3");
    EXPECT_EQ(doc_id_of_chunk("a#b#3"), "a#b");
}

TEST(Corpus, LoadTwoLines) {
    auto dir = testing::scratch_dir("corpus_load");
    testing::write_file(dir / "c.jsonl",
                        "{\"doc_id\":\"a\",\"title\":\"A\",\"body\":\"x\",\"version\":2}\n\n"
                        "{\"doc_id\":\"b\",\"title\":\"B\",\"body\":\"y\",\"version\":1}\n");
    auto docs = load_corpus(dir / "c.jsonl");
    ASSERT_EQ(docs.size(), 2U);
    EXPECT_EQ(docs[0].doc_id, "a");
    EXPECT_EQ(docs[0].version, 2);
    EXPECT_EQ(docs[1].body, "y");
}

TEST(Corpus, EmptyFileGivesEmptyList) {
    auto dir = testing::scratch_dir("corpus_empty");
    testing::write_file(dir / "c.jsonl", "");
    EXPECT_TRUE(load_corpus(dir / "c.jsonl").empty());
}

TEST(Corpus, DuplicateIdNamesTheId) {
    auto dir = testing::scratch_dir("corpus_dup");
    testing::write_file(dir / "c.jsonl",
                        "{\"doc_id\":\"same\",\"body\":\"x\"}\n{\"doc_id\":\"same\",\"body\":\"y\"}\n");
    try {
        load_corpus(dir / "c.jsonl");
        FAIL() << "expected an error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'same'"), std::string::npos);
    }
}

TEST(Corpus, MalformedLineReportsLineNumber) {
    auto dir = testing::scratch_dir("corpus_bad");
    testing::write_file(dir / "c.jsonl", "{\"doc_id\":\"a\",\"body\":\"x\"}\n{not json\n");
    try {
        load_corpus(dir / "c.jsonl");
        FAIL() << "expected an error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(Corpus, MissingFileIsIoError) {
    EXPECT_THROW(load_corpus(testing::scratch_dir("corpus_missing") / "nope.jsonl"), IoError);
}

TEST(Corpus, SaveLoadRoundTrip) {
    auto dir = testing::scratch_dir("corpus_roundtrip");
    auto docs = testing::tiny_corpus();
    save_corpus(dir / "c.jsonl", docs);
    auto back = load_corpus(dir / "c.jsonl");
    ASSERT_EQ(back.size(), docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        EXPECT_EQ(back[i].doc_id, docs[i].doc_id);
        EXPECT_EQ(back[i].body, docs[i].body);
    }
}

}  // namespace
}  // namespace fbrank
