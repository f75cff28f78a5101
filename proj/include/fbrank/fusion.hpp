#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fbrank/error.hpp"

namespace fbrank {

struct RankedEntry {
    std::string chunk_id;
    double score = 0.0;
};

/// Chunks ordered by one field's score for one user input, best first.
struct FieldRankedList {
    std::string field;
    std::size_t input = 0;
    std::vector<RankedEntry> entries;
};

/// Score descending, chunk id ascending.
inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.chunk_id < b.chunk_id;
}

inline void sort_ranked(std::vector<RankedEntry>& entries) { std::sort(entries.begin(), entries.end(), ranks_before); }

inline constexpr double kDefaultRrfConstant = 60.0;

/// Reciprocal rank fusion of one chunk: sum over the lists containing it of
/// 1 / (k + rank), rank 1-based.
inline double rrf(std::string_view chunk_id, std::span<const FieldRankedList> lists,
                  double k_const = kDefaultRrfConstant) {
    double total = 0.0;
    bool found = false;
    for (const auto& list : lists) {
        for (std::size_t r = 0; r < list.entries.size(); ++r) {
            if (list.entries[r].chunk_id == chunk_id) {
                total += 1.0 / (k_const + static_cast<double>(r + 1));
                found = true;
                break;
            }
        }
    }
    if (!found) {
        throw ValidationError("chunk '" + std::string(chunk_id) + "' appears in no ranked list");
    }
    return total;
}

/// rrf for every chunk that appears in at least one list.
inline std::unordered_map<std::string, double> rrf_scores(std::span<const FieldRankedList> lists,
                                                          double k_const = kDefaultRrfConstant) {
    std::unordered_map<std::string, double> acc;
    for (const auto& list : lists) {
        for (std::size_t r = 0; r < list.entries.size(); ++r) {
            acc[list.entries[r].chunk_id] += 1.0 / (k_const + static_cast<double>(r + 1));
        }
    }
    return acc;
}

/// Fused order: rrf descending, chunk id ascending.
inline std::vector<RankedEntry> fuse(std::span<const FieldRankedList> lists, double k_const = kDefaultRrfConstant) {
    std::vector<RankedEntry> out;
    for (auto& [id, score] : rrf_scores(lists, k_const)) {
        out.push_back({id, score});
    }
    sort_ranked(out);
    return out;
}

}  // namespace fbrank
