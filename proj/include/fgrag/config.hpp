#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "fgrag/corpus.hpp"
#include "fgrag/graph_index.hpp"
#include "fgrag/llm.hpp"
#include "fgrag/retrieval.hpp"
#include "fgrag/summarizer.hpp"

namespace fgrag {

// Effective settings of one run. Precedence: flags > config file > env >
// defaults; the merged result is echoed into run outputs and the manifest.
struct RunConfig {
    std::string corpus_dir;
    std::string index_dir;

    ChunkConfig chunking;
    RetrievalConfig retrieval;
    SummarizerConfig summarizer;
    IndexerConfig indexer;
    GatewayConfig gateway;

    std::string backend = "mock";  // mock | http
    std::uint64_t mock_seed = 0;
    bool mock_seed_set = false;
    std::size_t embed_dim = 64;

    std::string model;        // http backend
    std::string embed_model;  // http backend
    std::string api_base;     // http backend; FGRAG_API_KEY stays env-only

    std::string prompts_dir;  // empty = built-in templates
    std::string system_name = "fgrag";

    void validate() const {
        chunking.validate();
        retrieval.validate();
        if (backend != "mock" && backend != "http")
            throw ConfigError("backend must be 'mock' or 'http', got '" + backend + "'");
    }

    bool deterministic() const { return backend == "mock" && mock_seed_set; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["corpus_dir"] = corpus_dir;
        j["index_dir"] = index_dir;
        j["chunk_size"] = chunking.chunk_size;
        j["overlap_tokens"] = chunking.overlap_tokens;
        j["tokenizer"] = chunking.tokenizer_id;
        j["top_n_weak"] = retrieval.top_n_weak;
        j["top_n_strong_per_seed"] = retrieval.top_n_strong_per_seed;
        j["bfs_depth"] = retrieval.bfs_depth;
        j["max_descriptions"] = retrieval.max_descriptions;
        j["questions_per_entity"] = summarizer.questions_per_entity;
        j["token_ceiling"] = summarizer.prompt_token_ceiling;
        j["gleaning_passes"] = indexer.gleaning_passes;
        j["backend"] = backend;
        j["mock_seed"] = mock_seed;
        j["embed_dim"] = embed_dim;
        j["model"] = model;
        j["embed_model"] = embed_model;
        j["api_base"] = api_base;
        j["retry_attempts"] = gateway.max_attempts;
        j["token_budget"] = gateway.token_budget;
        j["max_inflight"] = gateway.max_inflight;
        j["prompts_dir"] = prompts_dir;
        j["system_name"] = system_name;
        return j;
    }
};

namespace detail {

template <typename T>
void parse_count(const std::string& key, const std::string& value, T& out) {
    try {
        const long long v = std::stoll(value);
        if (v < 0) throw std::out_of_range("negative");
        out = static_cast<T>(v);
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" +
                          value + "'");
    }
}

}  // namespace detail

// Applies one key=value setting; shared by the config-file reader and the CLI
// so both spell settings identically.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_count;
    if (key == "corpus_dir") cfg.corpus_dir = value;
    else if (key == "index_dir") cfg.index_dir = value;
    else if (key == "chunk_size") parse_count(key, value, cfg.chunking.chunk_size);
    else if (key == "overlap_tokens") parse_count(key, value, cfg.chunking.overlap_tokens);
    else if (key == "tokenizer") cfg.chunking.tokenizer_id = value;
    else if (key == "top_n_weak") parse_count(key, value, cfg.retrieval.top_n_weak);
    else if (key == "top_n_strong_per_seed")
        parse_count(key, value, cfg.retrieval.top_n_strong_per_seed);
    else if (key == "bfs_depth") parse_count(key, value, cfg.retrieval.bfs_depth);
    else if (key == "max_descriptions") parse_count(key, value, cfg.retrieval.max_descriptions);
    else if (key == "questions_per_entity")
        parse_count(key, value, cfg.summarizer.questions_per_entity);
    else if (key == "token_ceiling") parse_count(key, value, cfg.summarizer.prompt_token_ceiling);
    else if (key == "gleaning_passes") parse_count(key, value, cfg.indexer.gleaning_passes);
    else if (key == "backend") cfg.backend = value;
    else if (key == "mock_seed") {
        parse_count(key, value, cfg.mock_seed);
        cfg.mock_seed_set = true;
    } else if (key == "embed_dim") parse_count(key, value, cfg.embed_dim);
    else if (key == "model") cfg.model = value;
    else if (key == "embed_model") cfg.embed_model = value;
    else if (key == "api_base") cfg.api_base = value;
    else if (key == "retry_attempts") parse_count(key, value, cfg.gateway.max_attempts);
    else if (key == "token_budget") parse_count(key, value, cfg.gateway.token_budget);
    else if (key == "max_inflight") parse_count(key, value, cfg.gateway.max_inflight);
    else if (key == "prompts_dir") cfg.prompts_dir = value;
    else if (key == "system_name") cfg.system_name = value;
    else throw ConfigError("unknown config key: " + key);
}

// Config file format: one `key = value` per line, '#' starts a comment.
inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config file line " + std::to_string(lineno) +
                              " is not key = value");
        apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

// Environment layer: endpoint/model names only; the API key is read directly
// by the backend and never stored in the config.
inline void apply_env(RunConfig& cfg) {
    auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? v : "";
    };
    if (auto v = env("FGRAG_API_BASE"); !v.empty()) cfg.api_base = v;
    if (auto v = env("FGRAG_MODEL"); !v.empty()) cfg.model = v;
    if (auto v = env("FGRAG_EMBED_MODEL"); !v.empty()) cfg.embed_model = v;
}

}  // namespace fgrag
