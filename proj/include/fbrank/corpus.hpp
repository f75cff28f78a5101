#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "fbrank/error.hpp"
#include "fbrank/text.hpp"

namespace fbrank {

struct Document {
    std::string doc_id;
    std::string title;
    std::string body;
    std::int64_t version = 1;
};

/// A contiguous slice of a document body; the unit of retrieval.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t ordinal = 0;
    std::string title;
    std::string content;
    std::size_t content_length = 0;  // code points
};

inline std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal) {
    return std::string(doc_id) + "#" + std::to_string(ordinal);
}

/// Inverse of make_chunk_id. Ordinals never contain '#', so the last one splits.
inline std::string doc_id_of_chunk(std::string_view chunk_id) {
    auto pos = chunk_id.rfind('#');
    return std::string(pos == std::string_view::npos ? chunk_id : chunk_id.substr(0, pos));
}

/// doc_id -> current version.
using DocumentCatalog = std::map<std::string, std::int64_t, std::less<>>;

inline DocumentCatalog make_catalog(std::span<const Document> docs) {
    DocumentCatalog catalog;
    for (const auto& d : docs) {
        catalog[d.doc_id] = d.version;
    }
    return catalog;
}

namespace detail {

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline Span trim_span(std::string_view s, Span sp) {
    while (sp.begin < sp.end && is_space(s[sp.begin])) {
        ++sp.begin;
    }
    while (sp.end > sp.begin && is_space(s[sp.end - 1])) {
        --sp.end;
    }
    return sp;
}

inline std::size_t span_length(std::string_view s, Span sp) {
    return utf8_length(s.substr(sp.begin, sp.end - sp.begin));
}

inline void push_trimmed(std::string_view s, Span sp, std::vector<Span>& out) {
    sp = trim_span(s, sp);
    if (sp.begin < sp.end) {
        out.push_back(sp);
    }
}

/// Paragraphs are separated by a line that is empty or whitespace-only.
inline std::vector<Span> paragraph_spans(std::string_view s) {
    std::vector<Span> out;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '\n') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < s.size() && (s[j] == ' ' || s[j] == '\t' || s[j] == '\r')) {
            ++j;
        }
        if (j < s.size() && s[j] == '\n') {
            push_trimmed(s, {start, i}, out);
            while (j < s.size() && is_space(s[j])) {
                ++j;
            }
            start = j;
            i = j;
        } else {
            i = j;
        }
    }
    push_trimmed(s, {start, s.size()}, out);
    return out;
}

/// Sentences end at '.', '!' or '?' followed by whitespace or end of span.
inline std::vector<Span> sentence_spans(std::string_view s, Span para) {
    std::vector<Span> out;
    std::size_t start = para.begin;
    for (std::size_t i = para.begin; i < para.end; ++i) {
        char c = s[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == para.end || is_space(s[i + 1]))) {
            push_trimmed(s, {start, i + 1}, out);
            start = i + 1;
        }
    }
    push_trimmed(s, {start, para.end}, out);
    return out;
}

inline void hard_split(std::string_view s, Span sp, std::size_t max_size, std::vector<Span>& out) {
    std::size_t pos = sp.begin;
    while (pos < sp.end) {
        std::size_t next = std::min(utf8_advance(s, pos, max_size), sp.end);
        push_trimmed(s, {pos, next}, out);
        pos = next;
    }
}

/// Greedily merges consecutive atoms while the merged span fits.
inline void pack(std::string_view s, std::span<const Span> atoms, std::size_t max_size,
                 std::vector<Span>& out) {
    std::size_t i = 0;
    while (i < atoms.size()) {
        Span current = atoms[i];
        std::size_t j = i + 1;
        while (j < atoms.size() && span_length(s, {current.begin, atoms[j].end}) <= max_size) {
            current.end = atoms[j].end;
            ++j;
        }
        out.push_back(current);
        i = j;
    }
}

inline std::string heading_of(std::string_view content) {
    if (content.empty() || content.front() != '#') {
        return {};
    }
    auto line = content.substr(0, content.find('\n'));
    while (!line.empty() && line.front() == '#') {
        line.remove_prefix(1);
    }
    return std::string(trim(line));
}

}  // namespace detail

/// Splits a document at paragraph breaks, then sentence ends, then hard
/// character cuts, so every chunk holds at most `max_chunk_size` code points.
/// Only whitespace is lost between consecutive chunks.
inline std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_chunk_size) {
    if (max_chunk_size == 0) {
        throw ValidationError("max_chunk_size must be positive");
    }
    std::string_view body = doc.body;
    if (trim(body).empty()) {
        throw ValidationError("empty document");
    }

    std::vector<detail::Span> spans;
    std::vector<detail::Span> paragraph_run;
    auto flush = [&] {
        detail::pack(body, paragraph_run, max_chunk_size, spans);
        paragraph_run.clear();
    };
    for (const auto& para : detail::paragraph_spans(body)) {
        if (detail::span_length(body, para) <= max_chunk_size) {
            paragraph_run.push_back(para);
            continue;
        }
        flush();
        std::vector<detail::Span> atoms;
        for (const auto& sentence : detail::sentence_spans(body, para)) {
            if (detail::span_length(body, sentence) <= max_chunk_size) {
                atoms.push_back(sentence);
            } else {
                detail::hard_split(body, sentence, max_chunk_size, atoms);
            }
        }
        detail::pack(body, atoms, max_chunk_size, spans);
    }
    flush();

    std::vector<Chunk> chunks;
    chunks.reserve(spans.size());
    for (const auto& sp : spans) {
        Chunk c;
        c.ordinal = chunks.size();
        c.chunk_id = make_chunk_id(doc.doc_id, c.ordinal);
        c.doc_id = doc.doc_id;
        c.content = std::string(body.substr(sp.begin, sp.end - sp.begin));
        c.content_length = utf8_length(c.content);
        auto heading = detail::heading_of(c.content);
        c.title = heading.empty() ? doc.title : (doc.title.empty() ? heading : doc.title + " / " + heading);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

inline std::vector<Chunk> chunk_corpus(std::span<const Document> docs, std::size_t max_chunk_size) {
    std::vector<Chunk> out;
    for (const auto& d : docs) {
        auto chunks = chunk_document(d, max_chunk_size);
        out.insert(out.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
    }
    return out;
}

inline nlohmann::json to_json(const Document& d) {
    return {{"doc_id", d.doc_id}, {"title", d.title}, {"body", d.body}, {"version", d.version}};
}

inline Document document_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ValidationError("expected a JSON object");
    }
    Document d;
    if (!j.contains("doc_id") || !j["doc_id"].is_string()) {
        throw ValidationError("missing string field 'doc_id'");
    }
    if (!j.contains("body") || !j["body"].is_string()) {
        throw ValidationError("missing string field 'body'");
    }
    d.doc_id = j["doc_id"].get<std::string>();
    d.body = j["body"].get<std::string>();
    if (j.contains("title")) {
        if (!j["title"].is_string()) {
            throw ValidationError("field 'title' must be a string");
        }
        d.title = j["title"].get<std::string>();
    }
    if (j.contains("version")) {
        if (!j["version"].is_number_integer()) {
            throw ValidationError("field 'version' must be an integer");
        }
        d.version = j["version"].get<std::int64_t>();
    }
    return d;
}

/// Reads a JSONL corpus, one document object per line. Blank lines are skipped.
inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file " + path.string());
    }
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        Document d;
        try {
            d = document_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(d.doc_id).second) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": duplicate doc_id '" + d.doc_id + "'");
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

inline void save_corpus(const std::filesystem::path& path, std::span<const Document> docs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write corpus file " + path.string());
    }
    for (const auto& d : docs) {
        out << to_json(d).dump() << '\n';
    }
}

}  // namespace fbrank
