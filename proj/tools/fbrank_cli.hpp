#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fbrank/fbrank.hpp"

namespace fbrank::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

namespace detail {

inline void use_stderr_logger() {
    if (!spdlog::get("fbrank")) {
        auto logger = spdlog::stderr_color_mt("fbrank");
        logger->set_pattern("%l: %v");
        spdlog::set_default_logger(logger);
    }
}

inline std::vector<EngineVariant> parse_variants(const std::vector<std::string>& names) {
    if (names.empty()) {
        return default_variants();
    }
    std::vector<EngineVariant> out;
    for (const auto& n : names) {
        out.push_back(parse_variant(n));
    }
    return out;
}

inline std::vector<ScenarioQuery> load_scenario_queries(const std::filesystem::path& path) {
    return fbrank::detail::read_jsonl<ScenarioQuery>(path, [](const nlohmann::json& j) {
        ScenarioQuery q;
        q.query = j.at("query").get<std::string>();
        if (trim(q.query).empty()) {
            throw ValidationError("query must not be empty");
        }
        if (j.contains("intent") && j["intent"].is_string()) {
            q.intent = j["intent"].get<std::string>();
        }
        return q;
    });
}

inline EvalEngine make_eval_engine(const EngineConfig& cfg, const std::vector<EngineVariant>& variants) {
    bool synthetic = std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v.use_synthetic; });
    auto synth = synthetic ? cfg.make_synthetic_provider() : nullptr;
    if (synthetic && !synth) {
        throw ValidationError("HyQE configurations need a synthetic_provider other than 'none'");
    }
    return EvalEngine::build(load_corpus(cfg.corpus), cfg.make_embedding_provider(), synth.get(), cfg.max_chunk_size,
                             cfg.max_feedback_per_doc, cfg.bm25);
}

}  // namespace detail

/// Runs one command line. stdout receives line-delimited JSON; diagnostics go
/// to `err`. Returns the process exit status.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    detail::use_stderr_logger();
    CLI::App app{"Feedback-aware retrieval: index, query, learn from ratings and evaluate."};
    app.name("fbrank");
    app.require_subcommand(1);

    std::string config_path = "fbrank.conf";
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Engine config file (key = value)")->capture_default_str();
    };

    auto* index_cmd = app.add_subcommand("index", "Build the index directory from the corpus and indicator store");
    add_config(index_cmd);

    auto* query_cmd = app.add_subcommand("query", "Retrieve and re-rank chunks for a query");
    add_config(query_cmd);
    std::string query_text;
    std::string intent;
    std::size_t k = 0;
    double threshold = 0.0;
    query_cmd->add_option("--query", query_text, "User query")->required();
    query_cmd->add_option("--intent", intent, "Rewritten intent, used as a second input");
    auto* k_opt = query_cmd->add_option("--k", k, "Number of chunks to return")->check(CLI::PositiveNumber);
    auto* t_opt = query_cmd->add_option("--threshold", threshold, "Indicator admission threshold")
                      ->check(CLI::Range(0.0, 1.0));

    auto* feedback_cmd = app.add_subcommand("feedback", "Record a rated interaction in the indicator store");
    add_config(feedback_cmd);
    std::string fb_query;
    std::string fb_intent;
    int stars = 0;
    std::vector<std::string> docs;
    std::string when;
    feedback_cmd->add_option("--query", fb_query, "Query that was answered")->required();
    feedback_cmd->add_option("--stars", stars, "Star rating 1-5")->required()->check(CLI::Range(1, 5));
    feedback_cmd->add_option("--docs", docs, "Cited document ids, in citation order")->required()->delimiter(',');
    feedback_cmd->add_option("--intent", fb_intent, "Rewritten intent");
    feedback_cmd->add_option("--time", when, "Event time, YYYY-MM-DDTHH:MM:SSZ (default: now)");

    auto* sim_cmd = app.add_subcommand("simulate", "Run the iterative-learning benchmark");
    add_config(sim_cmd);
    SimulationConfig sim;
    std::vector<std::string> sim_configs;
    std::filesystem::path sim_out = "results";
    std::string run_id;
    sim_cmd->add_option("--iterations", sim.iterations, "Iterations")->check(CLI::PositiveNumber)->capture_default_str();
    sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
    sim_cmd->add_option("--configs", sim_configs, "Engine configurations, e.g. baseline,hyqe,feedback(0.75)+hyqe")
        ->delimiter(',');
    sim_cmd->add_option("--out", sim_out, "Results root directory")->capture_default_str();
    sim_cmd->add_option("--run-id", run_id, "Run directory name (default: seed-<seed>)");

    auto* sc_cmd = app.add_subcommand("scenarios", "Run the fine-grained scenarios against a feedback history");
    add_config(sc_cmd);
    std::filesystem::path history_path;
    std::filesystem::path probes_path;
    std::filesystem::path sc_out = "scenarios.csv";
    std::vector<std::string> sc_configs;
    ScenarioSettings settings;
    sc_cmd->add_option("--history", history_path, "Feedback events (JSONL)")->required();
    sc_cmd->add_option("--queries", probes_path, "Probe queries for the similar and unseen slices (JSONL)");
    sc_cmd->add_option("--configs", sc_configs, "Engine configurations")->delimiter(',');
    sc_cmd->add_option("--ks", settings.ks, "Cut-offs")->delimiter(',')->check(CLI::PositiveNumber);
    sc_cmd->add_option("--similar-threshold", settings.similar_threshold, "vscore at which queries count as similar")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sc_cmd->add_option("--out", sc_out, "CSV output path")->capture_default_str();

    auto* gen_cmd = app.add_subcommand("gen-corpus", "Write a synthetic clustered corpus");
    SyntheticCorpusSpec spec;
    std::filesystem::path gen_out;
    gen_cmd->add_option("--out", gen_out, "Output JSONL path")->required();
    gen_cmd->add_option("--documents", spec.documents, "Documents")->check(CLI::PositiveNumber)->capture_default_str();
    gen_cmd->add_option("--clusters", spec.clusters, "Topic clusters")->check(CLI::PositiveNumber)->capture_default_str();
    gen_cmd->add_option("--seed", spec.seed, "Random seed")->capture_default_str();

    std::vector<const char*> argv;
    argv.push_back("fbrank");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitValidation;
    }

    try {
        if (*gen_cmd) {
            save_corpus(gen_out, generate_corpus(spec));
            out << nlohmann::json{{"corpus", gen_out.string()}, {"documents", spec.documents}}.dump() << '\n';
            return kExitOk;
        }

        auto cfg = load_config(config_path);

        if (*index_cmd) {
            auto report = build_index_dir(cfg);
            out << to_json(report).dump() << '\n';
        } else if (*query_cmd) {
            if (*k_opt) {
                cfg.ranker.top_k = k;
            }
            if (*t_opt) {
                cfg.ranker.threshold = threshold;
            }
            cfg.validate();
            auto provider = cfg.make_embedding_provider();
            auto index = load_index_dir(cfg, *provider);
            auto bundle = make_query_bundle(*provider, query_text,
                                            intent.empty() ? std::nullopt : std::optional<std::string_view>(intent));
            auto result = retrieve_adaptive(index, bundle, cfg.ranker);
            for (const auto& c : result.chunks) {
                out << to_json(c, result.rounds).dump() << '\n';
            }
        } else if (*feedback_cmd) {
            FeedbackEvent e;
            e.query = fb_query;
            if (!fb_intent.empty()) {
                e.rewritten_intent = fb_intent;
            }
            e.star_rating = stars;
            e.referenced_docs = docs;
            e.timestamp = when.empty() ? std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now())
                                       : parse_iso8601(when);
            validate(e);
            auto catalog = make_catalog(load_corpus(cfg.corpus));
            auto provider = cfg.make_embedding_provider();
            IndicatorRepository repo(cfg.max_feedback_per_doc);
            if (std::filesystem::exists(cfg.indicator_store)) {
                for (auto& ind : load_indicators(cfg.indicator_store)) {
                    repo.add(std::move(ind));
                }
            }
            auto stored = ingest_feedback(repo, e, *provider, catalog);
            auto all = repo.all();
            save_indicators(cfg.indicator_store, all);
            append_feedback_event(cfg.feedback_log, e);
            out << nlohmann::json{{"stored", stored}, {"store_size", all.size()}}.dump() << '\n';
        } else if (*sim_cmd) {
            sim.ranker = cfg.ranker;
            auto variants = detail::parse_variants(sim_configs);
            auto engine = detail::make_eval_engine(cfg, variants);
            UserQuerySpec qspec;
            qspec.seed = sim.seed;
            auto pool = generate_user_queries(engine.chunks, qspec);
            auto result = run_iterative_benchmark(engine, pool, variants, sim);
            if (run_id.empty()) {
                run_id = "seed-" + std::to_string(sim.seed);
            }
            auto dir = sim_out / run_id;
            std::error_code ec;
            std::filesystem::create_directories(dir, ec);
            if (ec) {
                throw IoError("cannot create " + dir.string() + ": " + ec.message());
            }
            write_metrics_csv(dir / "metrics.csv", result.rows);
            auto manifest = benchmark_manifest(sim, variants, engine, pool.size());
            manifest["corpus"] = cfg.corpus.filename().string();
            fbrank::detail::write_text(dir / "manifest.json", manifest.dump(2) + '\n');
            for (const auto& v : variants) {
                nlohmann::json line = {{"config", v.name}};
                for (const char* split : {"old", "new"}) {
                    auto m = result.mean(v.name, split, "recall", sim.ranker.top_k);
                    line[std::string(split) + "_recall"] = m ? nlohmann::json(*m) : nlohmann::json();
                }
                out << line.dump() << '\n';
            }
        } else if (*sc_cmd) {
            if (!std::filesystem::exists(history_path)) {
                throw IoError("history file " + history_path.string() + " does not exist");
            }
            auto history = load_feedback_events(history_path);
            std::vector<ScenarioQuery> probes;
            if (!probes_path.empty()) {
                probes = detail::load_scenario_queries(probes_path);
            }
            settings.ranker = cfg.ranker;
            auto variants = detail::parse_variants(sc_configs);
            auto engine = detail::make_eval_engine(cfg, variants);
            auto rows = run_scenarios(engine, history, probes, variants, settings);
            write_scenarios_csv(sc_out, rows);
            for (const auto& r : rows) {
                out << nlohmann::json{{"scenario", r.scenario}, {"config", r.config}, {"metric", r.metric},
                                      {"k", r.k},               {"value", r.value},   {"queries", r.queries}}
                           .dump()
                    << '\n';
            }
        }
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}

}  // namespace fbrank::cli
