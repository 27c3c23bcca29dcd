#pragma once

// Glue shared by the CLI and the end-to-end tests: backend construction, the
// index-and-save flow, and the load-and-answer flow.

#include <memory>
#include <string>

#include "fgrag/config.hpp"
#include "fgrag/graph_index.hpp"
#include "fgrag/llm.hpp"
#include "fgrag/llm_http.hpp"
#include "fgrag/persistence.hpp"
#include "fgrag/summarizer.hpp"

namespace fgrag {

inline std::shared_ptr<LlmBackend> make_backend(const RunConfig& cfg) {
    auto tokenizer = make_tokenizer(cfg.chunking.tokenizer_id);
    if (cfg.backend == "mock")
        return std::make_shared<MockBackend>(cfg.mock_seed, cfg.embed_dim, tokenizer);
    HttpBackendConfig http;
    http.base_url = cfg.api_base;
    http.model = cfg.model;
    http.embed_model = cfg.embed_model;
    http.embedding_dim = cfg.embed_dim;
    return std::make_shared<HttpBackend>(HttpBackendConfig::from_env(http), tokenizer);
}

inline std::unique_ptr<LlmGateway> make_gateway(const RunConfig& cfg,
                                                std::shared_ptr<LlmBackend> backend) {
    return std::make_unique<LlmGateway>(std::move(backend), cfg.gateway,
                                        make_tokenizer(cfg.chunking.tokenizer_id));
}

inline PromptLibrary make_prompts(const RunConfig& cfg) {
    PromptLibrary prompts;
    if (!cfg.prompts_dir.empty()) prompts.load_overrides(cfg.prompts_dir);
    return prompts;
}

struct BuildOutcome {
    std::size_t entity_count = 0;
    std::size_t relationship_count = 0;
    BuildReport report;
    TokenUsageReport usage;
    CorpusLoadReport corpus_report;
};

// index: load corpus -> build graph + vector store -> persist with manifest.
inline BuildOutcome build_and_save(const RunConfig& cfg, LlmGateway& gateway,
                                   const PromptLibrary& prompts) {
    cfg.validate();
    if (cfg.corpus_dir.empty()) throw ConfigError("index requires a corpus directory");
    if (cfg.index_dir.empty()) throw ConfigError("index requires an output index directory");

    BuildOutcome outcome;
    auto corpus = load_corpus(cfg.corpus_dir, &outcome.corpus_report);

    GraphIndexer indexer(gateway, prompts, cfg.indexer);
    VectorStore store;
    KnowledgeGraph graph = indexer.build_index(corpus, cfg.chunking, store, &outcome.report);

    IndexManifest manifest;
    manifest.tokenizer_id = cfg.chunking.tokenizer_id;
    manifest.created_at = cfg.deterministic() && !std::getenv("SOURCE_DATE_EPOCH")
                              ? current_timestamp_utc(std::int64_t{0})
                              : current_timestamp_utc();
    manifest.config = cfg.to_json();
    manifest.template_checksums = prompts.checksums();
    manifest.indexing_usage = gateway.usage_report().to_json();
    save_index(graph, store, manifest, cfg.index_dir);

    outcome.entity_count = graph.entity_count();
    outcome.relationship_count = graph.relationship_count();
    outcome.usage = gateway.usage_report();
    return outcome;
}

struct QueryContext {
    LoadedIndex index;
    std::unique_ptr<LlmGateway> gateway;
    PromptLibrary prompts;
    std::unique_ptr<Retriever> retriever;
    std::unique_ptr<Summarizer> summarizer;
};

// query: load a persisted index and wire up the retrieval + summarization
// stack against it. Fails fast when the index was built with a different
// tokenizer or embedding dimension than the run requests.
inline QueryContext open_query_context(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.index_dir.empty()) throw ConfigError("an index directory is required");

    QueryContext ctx;
    ctx.index = load_index(cfg.index_dir);
    if (ctx.index.manifest.tokenizer_id != cfg.chunking.tokenizer_id)
        throw ConfigError("index was built with tokenizer '" + ctx.index.manifest.tokenizer_id +
                          "' but the run requests '" + cfg.chunking.tokenizer_id + "'");

    RunConfig effective = cfg;
    if (ctx.index.store.size() > 0) effective.embed_dim = ctx.index.store.dim();
    ctx.gateway = make_gateway(effective, make_backend(effective));
    ctx.gateway->set_phase(Phase::query);
    ctx.prompts = make_prompts(effective);
    ctx.retriever = std::make_unique<Retriever>(ctx.index.graph, ctx.index.store, *ctx.gateway,
                                                effective.retrieval);
    ctx.summarizer = std::make_unique<Summarizer>(*ctx.gateway, ctx.prompts, *ctx.retriever,
                                                  effective.summarizer);
    return ctx;
}

// Digest used by QFS query generation: leading tokens of the leading docs,
// enough to characterize the corpus without shipping all of it.
inline std::string make_corpus_digest(const std::vector<Document>& corpus,
                                      const Tokenizer& tokenizer,
                                      std::size_t docs_cap = 25, std::size_t tokens_per_doc = 120) {
    std::string digest;
    std::size_t used = 0;
    for (const auto& doc : corpus) {
        if (used >= docs_cap) break;
        ++used;
        auto spans = tokenizer.tokenize(doc.text);
        const std::size_t take = std::min(tokens_per_doc, spans.size());
        if (take == 0) continue;
        digest += "[" + doc.id + "] ";
        digest += doc.text.substr(spans[0].begin, spans[take - 1].end - spans[0].begin);
        digest += "\n";
    }
    return digest;
}

}  // namespace fgrag
