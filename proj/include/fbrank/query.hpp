#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fbrank/embedding.hpp"
#include "fbrank/error.hpp"

namespace fbrank {

struct QueryInput {
    std::string text;
    Embedding embedding;
};

/// The user inputs U: the raw query plus an optional rewritten intent.
struct QueryBundle {
    std::vector<QueryInput> inputs;
};

inline QueryBundle make_query_bundle(const EmbeddingProvider& provider, std::string_view query,
                                     std::optional<std::string_view> intent = std::nullopt) {
    QueryBundle b;
    b.inputs.push_back({std::string(query), embed(provider, query)});
    if (intent && !trim(*intent).empty()) {
        b.inputs.push_back({std::string(*intent), embed(provider, *intent)});
    }
    return b;
}

inline void validate(const QueryBundle& b, std::size_t max_inputs) {
    if (b.inputs.empty()) {
        throw ValidationError("query bundle has no inputs");
    }
    if (b.inputs.size() > max_inputs) {
        throw ValidationError("query bundle has " + std::to_string(b.inputs.size()) + " inputs; at most " +
                              std::to_string(max_inputs) + " allowed");
    }
}

}  // namespace fbrank
