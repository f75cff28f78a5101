#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fbrank/fbrank.hpp"

namespace fbrank::testing {

/// Fresh, empty directory under the build tree, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
    std::filesystem::path dir = std::filesystem::path(FBRANK_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline Document doc(std::string id, std::string title, std::string body, std::int64_t version = 1) {
    return Document{std::move(id), std::move(title), std::move(body), version};
}

/// Small hand-written corpus with clearly separated topics.
inline std::vector<Document> tiny_corpus() {
    return {
        doc("db", "Database tuning",
            "Indexes speed up queries on large tables.\n\nVacuum reclaims storage after heavy updates."),
        doc("net", "Network basics", "Routers forward packets between networks.\n\nLatency grows with distance."),
        doc("cook", "Cooking pasta", "Boil salted water before adding pasta.\n\nDrain the pasta and add sauce."),
        doc("garden", "Garden care", "Water tomatoes early in the morning.\n\nPrune roses in late winter."),
    };
}

}  // namespace fbrank::testing
