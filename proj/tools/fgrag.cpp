// fgrag — operator CLI: build indexes, answer queries, dump diagnostics, and
// drive evaluations. One command per process; see README for the formats.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgrag/evaluation.hpp"
#include "fgrag/pipeline.hpp"

namespace {

using namespace fgrag;

struct CommonFlags {
    std::string config_file;
    bool show_config = false;
    std::vector<std::pair<std::string, std::string>> overrides;  // flag layer, in parse order
};

// Every settings flag funnels through apply_config_entry so the CLI, the
// config file, and the docs agree on names and parsing.
void add_setting(CLI::App* cmd, CommonFlags& flags, const std::string& flag,
                 const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
           flag,
           [&flags, key](const std::string& value) { flags.overrides.emplace_back(key, value); },
           help)
        ->type_name("VALUE");
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_file, "key = value config file");
    cmd->add_flag("--show-config", flags.show_config, "print the merged effective config");
    add_setting(cmd, flags, "--chunk-size", "chunk_size", "chunk size in tokens (default 1200)");
    add_setting(cmd, flags, "--overlap", "overlap_tokens", "chunk overlap in tokens (default 100)");
    add_setting(cmd, flags, "--tokenizer", "tokenizer", "tokenizer id (default word-v1)");
    add_setting(cmd, flags, "--top-n-weak", "top_n_weak", "weak-context matches (default 5)");
    add_setting(cmd, flags, "--top-n-strong", "top_n_strong_per_seed",
                "strong-context matches per seed (default 3)");
    add_setting(cmd, flags, "--bfs-depth", "bfs_depth", "BFS hop count (default 1)");
    add_setting(cmd, flags, "--max-descriptions", "max_descriptions",
                "description cap per subgraph (default 200)");
    add_setting(cmd, flags, "--questions-per-entity", "questions_per_entity",
                "questions per query entity (default 3)");
    add_setting(cmd, flags, "--token-ceiling", "token_ceiling",
                "summary prompt token ceiling, 0 = unlimited (default 8000)");
    add_setting(cmd, flags, "--gleaning", "gleaning_passes", "extraction gleaning passes (default 1)");
    add_setting(cmd, flags, "--backend", "backend", "mock | http (default mock)");
    add_setting(cmd, flags, "--mock-seed", "mock_seed", "mock backend seed");
    add_setting(cmd, flags, "--embed-dim", "embed_dim", "embedding dimension (default 64)");
    add_setting(cmd, flags, "--model", "model", "chat model name (http backend)");
    add_setting(cmd, flags, "--embed-model", "embed_model", "embedding model name (http backend)");
    add_setting(cmd, flags, "--api-base", "api_base", "http backend base URL");
    add_setting(cmd, flags, "--retry-attempts", "retry_attempts", "max attempts per call (default 3)");
    add_setting(cmd, flags, "--token-budget", "token_budget", "abort past this many tokens, 0 = off");
    add_setting(cmd, flags, "--max-inflight", "max_inflight", "max concurrent backend calls");
    add_setting(cmd, flags, "--prompts", "prompts_dir", "prompt template override directory");
    add_setting(cmd, flags, "--system-name", "system_name", "system label in outputs");
}

// flags > config file > env > defaults.
RunConfig merge_config(const CommonFlags& flags) {
    RunConfig cfg;
    apply_env(cfg);
    if (!flags.config_file.empty()) apply_config_file(cfg, flags.config_file);
    for (const auto& [key, value] : flags.overrides) apply_config_entry(cfg, key, value);
    cfg.validate();
    if (flags.show_config) std::cout << cfg.to_json().dump(2) << "\n";
    return cfg;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out << content;
    if (!out) throw IoError("short write: " + path);
}

nlohmann::ordered_json answer_document(const Answer& answer, const RunConfig& cfg,
                                       const LlmGateway& gateway, const PromptLibrary& prompts) {
    nlohmann::ordered_json j = answer_to_json(answer);
    j["config"] = cfg.to_json();
    j["usage_report"] = gateway.usage_report().to_json();
    j["template_checksums"] = prompts.checksums();
    return j;
}

int cmd_index(const CommonFlags& flags, const std::string& corpus, const std::string& out_dir) {
    RunConfig cfg = merge_config(flags);
    cfg.corpus_dir = corpus;
    cfg.index_dir = out_dir;

    auto gateway = make_gateway(cfg, make_backend(cfg));
    PromptLibrary prompts = make_prompts(cfg);
    BuildOutcome outcome = build_and_save(cfg, *gateway, prompts);

    for (const auto& w : outcome.corpus_report.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& f : outcome.report.failures)
        std::cerr << "warning: chunk " << f.doc_id << "#" << f.chunk_index
                  << " failed extraction: " << f.message << "\n";
    std::cout << "indexed " << outcome.report.documents << " documents, " << outcome.report.chunks
              << " chunks -> " << outcome.entity_count << " entities, "
              << outcome.relationship_count << " relationships\n";
    outcome.usage.print_headline(std::cout);
    return 0;
}

int cmd_query(const CommonFlags& flags, const std::string& index_dir, const std::string& query,
              const std::string& json_path) {
    RunConfig cfg = merge_config(flags);
    cfg.index_dir = index_dir;

    QueryContext ctx = open_query_context(cfg);
    Answer answer = ctx.summarizer->answer_query(query);

    std::cout << answer_to_markdown(answer) << "\n";
    ctx.gateway->usage_report().print_headline(std::cout);
    write_text_file(json_path,
                    answer_document(answer, cfg, *ctx.gateway, ctx.prompts).dump(2) + "\n");
    std::cerr << "answer JSON written to " << json_path << "\n";
    return 0;
}

int cmd_batch_query(const CommonFlags& flags, const std::string& index_dir,
                    const std::string& queries_path, const std::string& out_path) {
    RunConfig cfg = merge_config(flags);
    cfg.index_dir = index_dir;

    std::ifstream in(queries_path);
    if (!in) throw IoError("cannot read queries file: " + queries_path);
    std::vector<std::pair<std::string, std::string>> queries;  // (id, text)
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '{') {
            nlohmann::json j = nlohmann::json::parse(t, nullptr, false);
            if (j.is_discarded())
                throw ParseError(queries_path + ":" + std::to_string(lineno) + " is not JSON");
            queries.emplace_back(
                j.value("query_id", "q" + std::to_string(queries.size() + 1)),
                j.contains("text") ? j["text"].get<std::string>()
                                   : j.at("query").get<std::string>());
        } else {
            queries.emplace_back("q" + std::to_string(queries.size() + 1), t);
        }
    }

    QueryContext ctx = open_query_context(cfg);
    std::string out;
    for (const auto& [id, text] : queries) {
        Answer answer = ctx.summarizer->answer_query(text);
        nlohmann::ordered_json j;
        j["query_id"] = id;
        j["system"] = cfg.system_name;
        j["text"] = answer.text;
        j["query"] = text;
        out += j.dump();
        out += "\n";
        std::cerr << "answered " << id << " (" << answer.parts.size() << " entities)\n";
    }
    write_text_file(out_path, out);
    std::cout << "wrote " << queries.size() << " answers to " << out_path << "\n";
    ctx.gateway->usage_report().print_headline(std::cout);
    return 0;
}

int cmd_eval_qfs_generate(const RunConfig& cfg, const std::string& corpus,
                          const std::string& out_path) {
    auto corpus_docs = load_corpus(corpus);
    auto tokenizer = make_tokenizer(cfg.chunking.tokenizer_id);
    const std::string digest = make_corpus_digest(corpus_docs, *tokenizer);

    auto gateway = make_gateway(cfg, make_backend(cfg));
    gateway->set_phase(Phase::query);
    PromptLibrary prompts = make_prompts(cfg);
    Evaluator evaluator(*gateway, prompts, cfg.summarizer.decoding);

    QueryGenReport report;
    auto queries = evaluator.generate_qfs_queries(digest, &report);

    std::map<std::string, int> dup_counts;
    std::string out;
    std::map<std::pair<int, int>, int> cell_counter;
    for (const auto& q : queries) {
        const int ordinal = ++cell_counter[{q.user, q.task}];
        nlohmann::ordered_json j;
        j["query_id"] = "u" + std::to_string(q.user) + "t" + std::to_string(q.task) + "q" +
                        std::to_string(ordinal);
        j["text"] = q.text;
        j["user"] = q.user;
        j["task"] = q.task;
        j["user_desc"] = q.user_desc;
        j["task_desc"] = q.task_desc;
        out += j.dump();
        out += "\n";
        dup_counts[q.text] += 1;
    }
    write_text_file(out_path, out);

    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& [text, count] : dup_counts)
        if (count > 1)
            std::cerr << "note: duplicate query emitted " << count << " times: " << text << "\n";
    std::cout << "generated " << queries.size() << " queries (" << report.cells_skipped
              << " cells skipped) -> " << out_path << "\n";
    return 0;
}

int cmd_eval_qfs_judge(const RunConfig& cfg, const std::string& answers_a_path,
                       const std::string& answers_b_path, const std::string& csv_path,
                       const std::string& md_path, const std::string& audit_path) {
    auto answers_a = read_answers_jsonl(answers_a_path);
    auto answers_b = read_answers_jsonl(answers_b_path);
    if (answers_a.empty() || answers_b.empty())
        throw ConfigError("both answers files must be non-empty");
    const std::string system_a = answers_a.front().system;
    const std::string system_b = answers_b.front().system;
    if (system_a == system_b)
        throw ConfigError("the two answers files carry the same system label: " + system_a);

    std::map<std::string, const AnswerRecord*> by_id_b;
    for (const auto& r : answers_b) by_id_b[r.query_id] = &r;

    auto gateway = make_gateway(cfg, make_backend(cfg));
    gateway->set_phase(Phase::query);
    PromptLibrary prompts = make_prompts(cfg);
    Evaluator evaluator(*gateway, prompts, cfg.summarizer.decoding);

    std::vector<JudgeDecision> decisions;
    std::size_t excluded = 0;
    std::size_t paired = 0;
    std::string audit;
    for (const auto& a : answers_a) {
        auto it = by_id_b.find(a.query_id);
        if (it == by_id_b.end()) {
            std::cerr << "warning: " << a.query_id << " missing from " << answers_b_path << "\n";
            continue;
        }
        const std::string query = !a.query.empty() ? a.query : it->second->query;
        if (query.empty())
            throw ConfigError("no query text for " + a.query_id +
                              "; answers files need a 'query' field");
        ++paired;
        auto ds = evaluator.judge_pair(a.query_id, query, system_a, a.text, system_b,
                                       it->second->text, &excluded);
        for (const auto& d : ds) {
            audit += decision_to_json(d).dump();
            audit += "\n";
        }
        decisions.insert(decisions.end(), ds.begin(), ds.end());
    }
    if (!audit_path.empty()) write_text_file(audit_path, audit);

    WinRateTable table = compute_win_rates(decisions, system_a, system_b, excluded);
    std::cout << table.to_markdown();
    if (!csv_path.empty()) write_text_file(csv_path, table.to_csv());
    if (!md_path.empty()) write_text_file(md_path, table.to_markdown());
    std::cerr << "judged " << paired << " query pairs, excluded orderings: " << excluded << "\n";
    return 0;
}

int cmd_eval_multihop(const std::string& gold_path, const std::string& pred_path,
                      const std::string& csv_path) {
    auto gold = read_multihop_gold(gold_path);
    auto answers = read_answers_jsonl(pred_path);
    std::map<std::string, std::string> predictions;
    for (const auto& a : answers) predictions[a.query_id] = a.text;

    MultiHopScore score = score_multihop(predictions, gold);
    char buf[96];
    std::string csv = "category,correct,total,accuracy\n";
    for (const auto& [cat, c] : score.per_category) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.2f", cat.c_str(), c.correct, c.total,
                      c.accuracy());
        csv += buf;
        csv += "\n";
        std::snprintf(buf, sizeof(buf), "%-12s %4zu/%-4zu %6.2f%%", cat.c_str(), c.correct,
                      c.total, c.accuracy());
        std::cout << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%-12s %4zu/%-4zu %6.2f%%", "overall", score.overall.correct,
                  score.overall.total, score.overall.accuracy());
    std::cout << buf << "\n";
    std::snprintf(buf, sizeof(buf), "overall,%zu,%zu,%.2f", score.overall.correct,
                  score.overall.total, score.overall.accuracy());
    csv += buf;
    csv += "\n";
    if (!csv_path.empty()) write_text_file(csv_path, csv);
    return 0;
}

int cmd_stats(const CommonFlags& flags, const std::string& index_dir) {
    RunConfig cfg = merge_config(flags);
    LoadedIndex idx = load_index(index_dir);

    std::cout << "entities: " << idx.graph.entity_count() << "\n";
    std::cout << "relationships: " << idx.graph.relationship_count() << "\n";
    std::cout << "vector records: " << idx.store.size() << " (dim " << idx.store.dim() << ")\n";
    std::cout << "tokenizer: " << idx.manifest.tokenizer_id << "\n";
    std::cout << "created_at: " << idx.manifest.created_at << "\n";
    std::cout << "degree histogram:\n";
    for (const auto& [degree, count] : idx.graph.degree_histogram())
        std::cout << "  degree " << degree << ": " << count << "\n";
    if (!idx.manifest.indexing_usage.is_null()) {
        const auto& u = idx.manifest.indexing_usage;
        if (u.contains("indexing"))
            std::cout << "Graph Indexing Tokens: "
                      << u["indexing"].value("prompt_tokens", 0) +
                             u["indexing"].value("completion_tokens", 0)
                      << "\n";
    }
    (void)cfg;
    return 0;
}

int cmd_dump_subgraph(const CommonFlags& flags, const std::string& index_dir,
                      const std::string& entity_text, const std::string& out_path) {
    RunConfig cfg = merge_config(flags);
    cfg.index_dir = index_dir;

    QueryContext ctx = open_query_context(cfg);
    Subgraph sg = ctx.retriever->retrieve_subgraph(entity_text);
    if (out_path.empty()) {
        dump_subgraph_jsonl(sg, ctx.index.graph, std::cout);
    } else {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write: " + out_path);
        dump_subgraph_jsonl(sg, ctx.index.graph, out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fgrag — graph-indexed retrieval with fine-grained query summarization"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* index = app.add_subcommand("index", "build a graph index from a corpus directory");
    std::string corpus_dir, out_dir;
    index->add_option("--corpus", corpus_dir, "corpus directory of .txt/.md files")->required();
    index->add_option("--out", out_dir, "output index directory")->required();
    add_common_flags(index, flags);

    auto* query = app.add_subcommand("query", "answer one query against an index");
    std::string index_dir, query_text, json_path = "answer.json";
    query->add_option("--index", index_dir, "index directory")->required();
    query->add_option("--q", query_text, "query text")->required();
    query->add_option("--json", json_path, "answer JSON output path (default answer.json)");
    add_common_flags(query, flags);

    auto* batch = app.add_subcommand("batch-query", "answer a file of queries");
    std::string queries_path, batch_out;
    batch->add_option("--index", index_dir, "index directory")->required();
    batch->add_option("--queries", queries_path, "query file: text lines or JSONL")->required();
    batch->add_option("--out", batch_out, "answers JSONL output path")->required();
    add_common_flags(batch, flags);

    auto* eval_qfs = app.add_subcommand("eval-qfs", "QFS evaluation: generate queries or judge answers");
    bool generate = false;
    std::string answers_a, answers_b, csv_path, md_path, audit_path, gen_out;
    eval_qfs->add_flag("--generate", generate, "generate QFS queries instead of judging");
    eval_qfs->add_option("--corpus", corpus_dir, "corpus directory (with --generate)");
    eval_qfs->add_option("--out", gen_out, "generated queries JSONL path (with --generate)");
    eval_qfs->add_option("--answers-a", answers_a, "answers JSONL, system A");
    eval_qfs->add_option("--answers-b", answers_b, "answers JSONL, system B");
    eval_qfs->add_option("--out-csv", csv_path, "win-rate table CSV path");
    eval_qfs->add_option("--out-md", md_path, "win-rate table markdown path");
    eval_qfs->add_option("--audit", audit_path, "per-decision audit JSONL path");
    add_common_flags(eval_qfs, flags);

    auto* eval_mh = app.add_subcommand("eval-multihop", "score multi-hop predictions by exact match");
    std::string gold_path, pred_path, mh_csv;
    eval_mh->add_option("--gold", gold_path, "gold items JSONL")->required();
    eval_mh->add_option("--pred", pred_path, "predictions JSONL (answers format)")->required();
    eval_mh->add_option("--out-csv", mh_csv, "per-category accuracy CSV path");

    auto* stats = app.add_subcommand("stats", "print graph/store statistics for an index");
    stats->add_option("--index", index_dir, "index directory")->required();
    add_common_flags(stats, flags);

    auto* dump = app.add_subcommand("dump-subgraph", "dump the retrieved subgraph as JSONL");
    std::string dump_out;
    dump->add_option("--index", index_dir, "index directory")->required();
    dump->add_option("--q", query_text, "query entity text")->required();
    dump->add_option("--out", dump_out, "output path (default stdout)");
    add_common_flags(dump, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(index)) return cmd_index(flags, corpus_dir, out_dir);
        if (app.got_subcommand(query)) return cmd_query(flags, index_dir, query_text, json_path);
        if (app.got_subcommand(batch))
            return cmd_batch_query(flags, index_dir, queries_path, batch_out);
        if (app.got_subcommand(eval_qfs)) {
            RunConfig cfg = merge_config(flags);
            if (generate) {
                if (corpus_dir.empty() || gen_out.empty())
                    throw ConfigError("eval-qfs --generate requires --corpus and --out");
                return cmd_eval_qfs_generate(cfg, corpus_dir, gen_out);
            }
            if (answers_a.empty() || answers_b.empty())
                throw ConfigError("eval-qfs judging requires --answers-a and --answers-b");
            return cmd_eval_qfs_judge(cfg, answers_a, answers_b, csv_path, md_path, audit_path);
        }
        if (app.got_subcommand(eval_mh)) return cmd_eval_multihop(gold_path, pred_path, mh_csv);
        if (app.got_subcommand(stats)) return cmd_stats(flags, index_dir);
        if (app.got_subcommand(dump))
            return cmd_dump_subgraph(flags, index_dir, query_text, dump_out);
    } catch (const std::exception& e) {
        nlohmann::ordered_json err;
        err["error"] = {{"type", fgrag::error_type_name(e)}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
