#pragma once

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fbrank/config.hpp"
#include "fbrank/corpus.hpp"
#include "fbrank/error.hpp"
#include "fbrank/index.hpp"
#include "fbrank/indicators.hpp"

namespace fbrank {

/// Exclusive lock on an index directory, held for the lifetime of the object.
class IndexLock {
  public:
    explicit IndexLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create " + dir.string() + ": " + ec.message());
        }
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr) {
            if (errno == EEXIST) {
                throw IoError("index directory " + dir.string() + " is locked by another build (" + path_.string() +
                              ")");
            }
            throw IoError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
        }
        std::fclose(f);
    }
    IndexLock(const IndexLock&) = delete;
    IndexLock& operator=(const IndexLock&) = delete;
    ~IndexLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

  private:
    std::filesystem::path path_;
};

inline nlohmann::json to_json(const EmbeddedChunk& e) {
    const auto& c = e.chunk;
    return {{"chunk_id", c.chunk_id},
            {"doc_id", c.doc_id},
            {"ordinal", c.ordinal},
            {"title", c.title},
            {"content", c.content},
            {"content_length", c.content_length},
            {"keywords", e.keywords},
            {"title_embedding", e.title_embedding.vector()},
            {"content_embedding", e.content_embedding.vector()}};
}

inline EmbeddedChunk embedded_chunk_from_json(const nlohmann::json& j) {
    EmbeddedChunk e;
    auto& c = e.chunk;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.ordinal = j.at("ordinal").get<std::size_t>();
    c.title = j.at("title").get<std::string>();
    c.content = j.at("content").get<std::string>();
    c.content_length = j.at("content_length").get<std::size_t>();
    e.keywords = j.at("keywords").get<std::vector<std::string>>();
    e.title_embedding = Embedding(j.at("title_embedding").get<std::vector<double>>());
    e.content_embedding = Embedding(j.at("content_embedding").get<std::vector<double>>());
    return e;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
        out << text;
        if (!out) {
            throw IoError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot replace " + path.string() + ": " + ec.message());
    }
}

}  // namespace detail

struct IndexBuildReport {
    std::size_t documents = 0;
    std::size_t chunks = 0;
    std::size_t synthetic_indicators = 0;
    std::size_t feedback_indicators = 0;
    std::size_t evicted = 0;
};

inline nlohmann::json to_json(const IndexBuildReport& r) {
    return {{"documents", r.documents},
            {"chunks", r.chunks},
            {"synthetic_indicators", r.synthetic_indicators},
            {"feedback_indicators", r.feedback_indicators},
            {"evicted", r.evicted}};
}

/// Offline phase: chunk the corpus, generate synthetic indicators, merge the
/// stored feedback indicators (dropping stale ones) and write the index
/// directory. Output is byte-identical for unchanged inputs.
inline IndexBuildReport build_index_dir(const EngineConfig& cfg) {
    cfg.validate();
    if (!std::filesystem::exists(cfg.corpus)) {
        throw IoError("corpus " + cfg.corpus.string() + " does not exist");
    }
    IndexLock lock(cfg.index_dir);
    auto docs = load_corpus(cfg.corpus);
    auto catalog = make_catalog(docs);
    auto chunks = chunk_corpus(docs, cfg.max_chunk_size);
    auto provider = cfg.make_embedding_provider();

    IndicatorRepository repo(cfg.max_feedback_per_doc);
    IndexBuildReport report;
    report.documents = docs.size();
    report.chunks = chunks.size();
    if (auto synth = cfg.make_synthetic_provider()) {
        report.synthetic_indicators = add_synthetic_indicators(repo, chunks, *synth, *provider, catalog);
    }
    if (std::filesystem::exists(cfg.indicator_store)) {
        for (auto& ind : load_indicators(cfg.indicator_store)) {
            if (ind.source != IndicatorSource::feedback) {
                spdlog::warn("indicator store holds a non-feedback indicator for '{}'; ignored", ind.target_id());
                continue;
            }
            if (ind.query_embedding.dim() != provider->dim()) {
                throw ValidationError("indicator store embeddings have dimension " +
                                      std::to_string(ind.query_embedding.dim()) + ", provider has " +
                                      std::to_string(provider->dim()));
            }
            repo.add_feedback(std::move(ind));
        }
    }
    report.evicted = repo.evict_stale(catalog);
    report.feedback_indicators = repo.feedback_count();

    auto index = SearchIndex::build(chunks, repo, *provider, cfg.bm25);

    std::string chunk_lines;
    for (const auto& c : index.chunks()) {
        chunk_lines += to_json(c).dump() + '\n';
    }
    std::string indicator_lines;
    for (const auto& ind : repo.all()) {
        indicator_lines += to_json(ind).dump() + '\n';
    }
    nlohmann::json manifest = to_json(report);
    manifest["embedding"] = provider->name();
    manifest["dim"] = provider->dim();
    manifest["bm25"] = {{"k1", cfg.bm25.k1}, {"b", cfg.bm25.b}};
    manifest["max_feedback_per_doc"] = cfg.max_feedback_per_doc;
    manifest["max_chunk_size"] = cfg.max_chunk_size;
    nlohmann::json stats;
    for (auto f : {field::title, field::content, field::keywords}) {
        const auto& s = index.text_field(f).stats();
        stats[std::string(f)] = {{"documents", s.documents},
                                 {"terms", s.terms},
                                 {"total_length", s.total_length},
                                 {"average_length", s.average_length}};
    }
    detail::write_text(cfg.index_dir / "chunks.jsonl", chunk_lines);
    detail::write_text(cfg.index_dir / "indicators.jsonl", indicator_lines);
    detail::write_text(cfg.index_dir / "stats.json", stats.dump(2) + '\n');
    detail::write_text(cfg.index_dir / "manifest.json", manifest.dump(2) + '\n');
    return report;
}

/// Loads a built index directory for querying.
inline SearchIndex load_index_dir(const EngineConfig& cfg, const EmbeddingProvider& provider) {
    const auto& dir = cfg.index_dir;
    auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw IoError("no index at " + dir.string() + "; run the index command first");
    }
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot open " + manifest_path.string());
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(manifest_path.string() + ": " + e.what());
    }
    auto name = manifest.value("embedding", std::string());
    if (name != provider.name()) {
        throw ValidationError("index was built with embedding '" + name + "' but the config selects '" +
                              provider.name() + "'; rebuild the index");
    }
    auto chunks = detail::read_jsonl<EmbeddedChunk>(dir / "chunks.jsonl", embedded_chunk_from_json);
    IndicatorRepository repo(manifest.value("max_feedback_per_doc", cfg.max_feedback_per_doc));
    for (auto& ind : load_indicators(dir / "indicators.jsonl")) {
        repo.add(std::move(ind));
    }
    Bm25Params params;
    if (manifest.contains("bm25")) {
        params.k1 = manifest["bm25"].value("k1", params.k1);
        params.b = manifest["bm25"].value("b", params.b);
    }
    return SearchIndex::from_embedded(std::move(chunks), repo, name, provider.dim(), params);
}

}  // namespace fbrank
