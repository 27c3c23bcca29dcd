#pragma once

#include <atomic>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "fgrag/corpus.hpp"
#include "fgrag/graph.hpp"
#include "fgrag/llm.hpp"
#include "fgrag/vector_store.hpp"

namespace fgrag {

struct ExtractionResult {
    std::vector<EntityMention> mentions;
    std::vector<Relationship> relations;
};

namespace detail {

inline bool is_empty_extraction_marker(std::string_view reply) {
    auto t = to_lower_ascii(trim_view(reply));
    return t.empty() || t == "[]" || t == "none" || t == "(none)" || t == "no records";
}

inline std::string strip_record_decorations(std::string_view line) {
    std::string t = trim(line);
    auto is_front_junk = [](char c) {
        return c == '(' || c == '"' || c == '-' || c == '*' || c == ' ' || c == '\t';
    };
    auto is_back_junk = [](char c) { return c == ')' || c == '"' || c == ','; };
    while (!t.empty() && is_front_junk(t.front())) t.erase(t.begin());
    while (!t.empty() && is_back_junk(t.back())) t.pop_back();
    return trim(t);
}

}  // namespace detail

// Parses the tuple-per-line extraction format:
//   entity|<name>|<type>|<description>
//   relation|<src>|<dst>|<description>[|<weight>]
// Lenient: decorations are stripped, unknown lines are skipped (counted), a
// bare "[]"/none reply is a valid empty extraction. A reply with content but
// zero parseable records throws ParseError.
inline ExtractionResult parse_extraction_reply(const std::string& reply, const SourceRef& src,
                                               std::size_t* skipped_lines = nullptr) {
    ExtractionResult out;
    if (detail::is_empty_extraction_marker(reply)) return out;

    std::size_t skipped = 0;
    std::size_t content_lines = 0;
    for (const auto& raw : split_lines(reply)) {
        std::string line = detail::strip_record_decorations(raw);
        if (line.empty()) continue;
        ++content_lines;
        auto fields = split(line, '|');
        for (auto& f : fields) f = trim(f);
        const std::string kind = to_lower_ascii(fields[0]);
        if (kind == "entity" && fields.size() >= 3) {
            EntityMention m;
            m.name = fields[1];
            if (fields.size() >= 4) {
                m.type_tag = fields[2];
                m.description = fields[3];
            } else {
                m.description = fields[2];
            }
            if (m.name.empty() || m.description.empty()) {
                ++skipped;
                continue;
            }
            m.source = src;
            out.mentions.push_back(std::move(m));
        } else if ((kind == "relation" || kind == "relationship") && fields.size() >= 4) {
            Relationship r;
            r.src = fields[1];
            r.dst = fields[2];
            r.description = fields[3];
            if (r.src.empty() || r.dst.empty() || r.description.empty()) {
                ++skipped;
                continue;
            }
            if (fields.size() >= 5 && !fields[4].empty()) {
                try {
                    r.weight = std::stod(fields[4]);
                } catch (...) {
                    // weight stays unset
                }
            }
            r.source = src;
            out.relations.push_back(std::move(r));
        } else {
            ++skipped;
        }
    }
    if (skipped_lines) *skipped_lines = skipped;
    if (content_lines > 0 && out.mentions.empty() && out.relations.empty())
        throw ParseError("extraction reply contained no parseable records");
    return out;
}

// Groups mentions by normalized name; each group becomes one Entity whose
// descriptions preserve first-seen order. Total description count is
// conserved.
inline std::vector<Entity> merge_entities(const std::vector<EntityMention>& mentions) {
    std::map<std::string, std::size_t> index;  // canonical name -> slot
    std::vector<Entity> merged;
    for (const auto& m : mentions) {
        const std::string key = normalize_entity_name(m.name);
        if (key.empty()) continue;
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, merged.size());
            Entity e;
            e.canonical_name = key;
            e.type_tag = m.type_tag;
            e.descriptions.push_back({m.description, m.source});
            merged.push_back(std::move(e));
        } else {
            Entity& e = merged[it->second];
            if (e.type_tag.empty()) e.type_tag = m.type_tag;
            e.descriptions.push_back({m.description, m.source});
        }
    }
    return merged;
}

struct IndexerConfig {
    int gleaning_passes = 1;
    std::size_t embed_batch = 64;
    double max_failed_chunk_ratio = 0.5;  // build fails above this
    int extraction_concurrency = 4;
    DecodingParams decoding;
};

struct ChunkFailure {
    std::string doc_id;
    std::size_t chunk_index = 0;
    std::string message;
};

struct BuildReport {
    std::size_t documents = 0;
    std::size_t chunks = 0;
    std::size_t mentions_before_merge = 0;
    std::vector<ChunkFailure> failures;
};

// Builds the knowledge graph: per-chunk LLM extraction (with gleaning),
// same-name merge, graph assembly, and entity-description embedding into the
// vector store.
class GraphIndexer {
public:
    GraphIndexer(LlmGateway& gateway, const PromptLibrary& prompts, IndexerConfig cfg = {})
        : gateway_(gateway), prompts_(prompts), cfg_(cfg) {}

    // Pass 0 parses the main extraction reply; each gleaning pass re-prompts
    // with the already-found records and appends only novel items. An
    // unparseable reply gets one reformat re-ask before the chunk fails.
    ExtractionResult extract_elements(const Chunk& chunk, int gleaning_passes) {
        const SourceRef src{chunk.doc_id, chunk.index};
        PromptInstance prompt =
            prompts_.render(TemplateId::extract_elements, {{"chunk_text", chunk.text}});
        ExtractionResult result = parse_with_reformat(prompt, src);
        dedup_in_place(result);

        for (int pass = 0; pass < gleaning_passes; ++pass) {
            PromptInstance glean = prompts_.render(
                TemplateId::glean_more,
                {{"chunk_text", chunk.text}, {"known_items", format_records(result)}});
            ExtractionResult more;
            try {
                more = parse_with_reformat(glean, src);
            } catch (const ParseError&) {
                break;  // a noisy glean pass never invalidates pass-0 output
            }
            append_novel(result, more);
        }
        return result;
    }

    ExtractionResult extract_elements(const Chunk& chunk) {
        return extract_elements(chunk, cfg_.gleaning_passes);
    }

    KnowledgeGraph build_index(const std::vector<Document>& corpus, const ChunkConfig& chunk_cfg,
                               VectorStore& store, BuildReport* report = nullptr) {
        gateway_.set_phase(Phase::indexing);
        BuildReport local_report;
        BuildReport& rep = report ? *report : local_report;
        rep.documents = corpus.size();

        std::vector<Chunk> chunks;
        for (const auto& doc : corpus) {
            auto doc_chunks = chunk_document(doc, chunk_cfg);
            chunks.insert(chunks.end(), doc_chunks.begin(), doc_chunks.end());
        }
        rep.chunks = chunks.size();

        // Extraction fans out; results land in per-chunk slots so assembly
        // order is independent of completion order.
        std::vector<std::optional<ExtractionResult>> slots(chunks.size());
        std::vector<std::optional<ChunkFailure>> failures(chunks.size());
        run_extractions(chunks, slots, failures);

        for (auto& f : failures)
            if (f) rep.failures.push_back(*f);
        if (!chunks.empty() &&
            static_cast<double>(rep.failures.size()) >
                cfg_.max_failed_chunk_ratio * static_cast<double>(chunks.size())) {
            throw Error("index build failed: " + std::to_string(rep.failures.size()) + " of " +
                        std::to_string(chunks.size()) + " chunks failed extraction");
        }

        std::vector<EntityMention> mentions;
        std::vector<Relationship> relations;
        for (auto& slot : slots) {
            if (!slot) continue;
            mentions.insert(mentions.end(), slot->mentions.begin(), slot->mentions.end());
            relations.insert(relations.end(), slot->relations.begin(), slot->relations.end());
        }
        rep.mentions_before_merge = mentions.size();

        KnowledgeGraph graph;
        for (const auto& e : merge_entities(mentions)) graph.upsert_entity(e);
        for (auto& r : relations) graph.add_relationship(std::move(r));
        graph.validate();

        embed_entities(graph, store);
        return graph;
    }

    // Embedded text per entity: canonical name + joined descriptions.
    static std::string embedding_text(const Entity& e) {
        std::string text = e.canonical_name;
        for (const auto& d : e.descriptions) {
            text += "\n";
            text += d.text;
        }
        return text;
    }

private:
    ExtractionResult parse_with_reformat(const PromptInstance& prompt, const SourceRef& src) {
        CompletionResult res = gateway_.complete(prompt, cfg_.decoding);
        try {
            return parse_extraction_reply(res.text, src);
        } catch (const ParseError&) {
            PromptInstance retry = prompt;
            retry.rendered +=
                "\n\nReformat: output exactly one record per line as "
                "entity|name|category|description or relation|source|target|description|strength, "
                "or [] if there is nothing to extract.\n";
            CompletionResult second = gateway_.complete(retry, cfg_.decoding);
            return parse_extraction_reply(second.text, src);
        }
    }

    void run_extractions(const std::vector<Chunk>& chunks,
                         std::vector<std::optional<ExtractionResult>>& slots,
                         std::vector<std::optional<ChunkFailure>>& failures) {
        const std::size_t workers =
            std::max<std::size_t>(1, std::min<std::size_t>(cfg_.extraction_concurrency,
                                                           chunks.empty() ? 1 : chunks.size()));
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= chunks.size()) return;
                try {
                    slots[i] = extract_elements(chunks[i]);
                } catch (const BudgetError&) {
                    throw;
                } catch (const std::exception& e) {
                    failures[i] = ChunkFailure{chunks[i].doc_id, chunks[i].index, e.what()};
                }
            }
        };
        if (workers == 1) {
            worker();
            return;
        }
        std::vector<std::future<void>> futs;
        for (std::size_t w = 0; w < workers; ++w)
            futs.push_back(std::async(std::launch::async, worker));
        for (auto& f : futs) f.get();
    }

    void embed_entities(const KnowledgeGraph& graph, VectorStore& store) {
        std::vector<std::string> names;
        std::vector<std::string> texts;
        auto flush = [&] {
            if (texts.empty()) return;
            auto vectors = gateway_.embed(texts);
            std::vector<EmbeddingRecord> records;
            records.reserve(texts.size());
            for (std::size_t i = 0; i < texts.size(); ++i)
                records.push_back(EmbeddingRecord{names[i], std::move(vectors[i]),
                                                  fnv1a64(texts[i])});
            store.upsert(records);
            names.clear();
            texts.clear();
        };
        for (const auto& [name, entity] : graph.entities()) {
            names.push_back(name);
            texts.push_back(embedding_text(entity));
            if (texts.size() >= cfg_.embed_batch) flush();
        }
        flush();
    }

    static std::string format_records(const ExtractionResult& r) {
        std::string out;
        for (const auto& m : r.mentions)
            out += "entity|" + m.name + "|" + m.type_tag + "|" + m.description + "\n";
        for (const auto& rel : r.relations)
            out += "relation|" + rel.src + "|" + rel.dst + "|" + rel.description + "\n";
        if (out.empty()) out = "[]";
        return out;
    }

    // Within-chunk dedup keys: (name, description) and (src, dst, description).
    static void dedup_in_place(ExtractionResult& r) {
        std::set<std::pair<std::string, std::string>> seen_mentions;
        std::vector<EntityMention> mentions;
        for (auto& m : r.mentions)
            if (seen_mentions.insert({m.name, m.description}).second)
                mentions.push_back(std::move(m));
        r.mentions = std::move(mentions);

        std::set<std::tuple<std::string, std::string, std::string>> seen_rels;
        std::vector<Relationship> relations;
        for (auto& rel : r.relations)
            if (seen_rels.insert({rel.src, rel.dst, rel.description}).second)
                relations.push_back(std::move(rel));
        r.relations = std::move(relations);
    }

    static void append_novel(ExtractionResult& base, const ExtractionResult& more) {
        std::set<std::pair<std::string, std::string>> seen_mentions;
        for (const auto& m : base.mentions) seen_mentions.insert({m.name, m.description});
        for (const auto& m : more.mentions)
            if (seen_mentions.insert({m.name, m.description}).second) base.mentions.push_back(m);

        std::set<std::tuple<std::string, std::string, std::string>> seen_rels;
        for (const auto& r : base.relations) seen_rels.insert({r.src, r.dst, r.description});
        for (const auto& r : more.relations)
            if (seen_rels.insert({r.src, r.dst, r.description}).second) base.relations.push_back(r);
    }

    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    IndexerConfig cfg_;
};

}  // namespace fgrag
