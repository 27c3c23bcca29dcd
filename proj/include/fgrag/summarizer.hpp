#pragma once

#include <future>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgrag/llm.hpp"
#include "fgrag/retrieval.hpp"

namespace fgrag {

struct SummarizerConfig {
    std::size_t questions_per_entity = 3;
    std::size_t prompt_token_ceiling = 8000;  // 0 = unlimited
    bool parallel_entities = true;
    DecodingParams decoding;
};

struct QueryDecomposition {
    std::string query;
    std::vector<std::string> entities;  // extraction order, case-insensitive dedup
    bool fallback = false;              // whole query used as a single pseudo-entity
};

struct EntityQuestions {
    std::string entity;
    std::vector<std::string> questions;
    bool fallback = false;  // raw query used as the single question
    TokenUsage usage;
};

struct EntitySummary {
    std::string entity;
    std::string summary_text;
    Subgraph source_subgraph;
    TokenUsage usage;
    bool sentinel = false;
    std::size_t truncated_descriptions = 0;  // dropped by the token ceiling
};

struct EntityAnswerPart {
    std::string entity;
    EntityQuestions questions;
    EntitySummary summary;
    std::string error;  // non-empty when this entity degraded to a sentinel
};

struct Answer {
    std::string query;
    std::string text;
    std::vector<EntityAnswerPart> parts;
    TokenUsage usage;  // exact sum of every completion call made for the query
    TokenUsage decompose_usage;
    TokenUsage compose_usage;
    bool decomposition_fallback = false;
};

inline const std::string kSentinelPrefix = "no indexed information for ";
inline const std::string kInsufficientAnswer =
    "Insufficient indexed information to answer this query.";

// Query-level fine-grained summarization: decompose the query into entities,
// then per entity retrieve a subgraph, pose reader questions, and summarize;
// a final completion composes the answer from all entity summaries.
class Summarizer {
public:
    Summarizer(LlmGateway& gateway, const PromptLibrary& prompts, const Retriever& retriever,
               SummarizerConfig cfg = {})
        : gateway_(gateway), prompts_(prompts), retriever_(retriever), cfg_(cfg) {
        if (cfg_.questions_per_entity < 1)
            throw ConfigError("questions_per_entity must be >= 1");
    }

    QueryDecomposition decompose_query(const std::string& query, TokenUsage* usage = nullptr) {
        if (trim_view(query).empty()) throw ConfigError("query must be non-empty");
        PromptInstance prompt = prompts_.render(TemplateId::decompose_query, {{"query", query}});
        CompletionResult res = gateway_.complete(prompt, cfg_.decoding);
        if (usage) *usage += res.usage;

        QueryDecomposition out;
        out.query = query;
        out.entities = parse_entity_list(res.text);
        if (out.entities.empty()) {
            out.entities.push_back(trim(query));
            out.fallback = true;
        }
        return out;
    }

    EntityQuestions formulate_questions(const std::string& entity, const std::string& query) {
        PromptInstance prompt = prompts_.render(
            TemplateId::formulate_questions,
            {{"entity", entity},
             {"query", query},
             {"count", std::to_string(cfg_.questions_per_entity)}});

        EntityQuestions out;
        out.entity = entity;
        CompletionResult res = gateway_.complete(prompt, cfg_.decoding);
        out.usage += res.usage;
        out.questions = parse_questions(res.text);
        if (out.questions.empty()) {
            CompletionResult retry = gateway_.complete(prompt, cfg_.decoding);
            out.usage += retry.usage;
            out.questions = parse_questions(retry.text);
        }
        if (out.questions.empty()) {
            out.questions.push_back(trim(query));
            out.fallback = true;
        }
        if (out.questions.size() > cfg_.questions_per_entity)
            out.questions.resize(cfg_.questions_per_entity);
        return out;
    }

    // The prompt carries the subgraph's deduplicated descriptions and all
    // questions; the reply is kept verbatim. An empty subgraph yields the
    // documented sentinel without a completion call.
    EntitySummary summarize_entity(const Subgraph& sg, const EntityQuestions& qs) {
        EntitySummary out;
        out.entity = qs.entity;
        out.source_subgraph = sg;
        if (sg.empty()) {
            out.summary_text = kSentinelPrefix + qs.entity;
            out.sentinel = true;
            return out;
        }

        std::vector<std::string> descriptions = collect_descriptions(sg);
        std::string questions_block;
        for (const auto& q : qs.questions) questions_block += q + "\n";

        PromptInstance prompt = render_summary_prompt(qs.entity, questions_block, descriptions);
        if (cfg_.prompt_token_ceiling > 0) {
            // Over-ceiling prompts shed trailing (lowest-priority) descriptions.
            while (descriptions.size() > 1 &&
                   gateway_.tokenizer().count(prompt.rendered) > cfg_.prompt_token_ceiling) {
                descriptions.pop_back();
                ++out.truncated_descriptions;
                prompt = render_summary_prompt(qs.entity, questions_block, descriptions);
            }
        }

        CompletionResult res = gateway_.complete(prompt, cfg_.decoding);
        out.summary_text = res.text;
        out.usage = res.usage;
        return out;
    }

    // One completion over all summaries. If every summary is a sentinel there
    // is nothing to compose from and the canned insufficiency text is used.
    Answer compose_answer(const std::string& query, std::vector<EntityAnswerPart> parts) {
        if (parts.empty()) throw ConfigError("compose_answer requires at least one summary");
        Answer answer;
        answer.query = query;

        bool all_sentinel = true;
        for (const auto& p : parts)
            if (!p.summary.sentinel) all_sentinel = false;

        if (all_sentinel) {
            answer.text = kInsufficientAnswer;
        } else {
            std::string summaries_block;
            for (const auto& p : parts) {
                summaries_block += "## " + p.entity + "\n";
                summaries_block += p.summary.summary_text + "\n\n";
            }
            PromptInstance prompt = prompts_.render(
                TemplateId::compose_answer, {{"query", query}, {"summaries", summaries_block}});
            CompletionResult res = gateway_.complete(prompt, cfg_.decoding);
            answer.text = res.text;
            answer.compose_usage = res.usage;
        }

        for (const auto& p : parts) {
            answer.usage += p.questions.usage;
            answer.usage += p.summary.usage;
        }
        answer.usage += answer.compose_usage;
        answer.parts = std::move(parts);
        return answer;
    }

    // Full pipeline for one query. Per-entity stages are independent and may
    // fan out; results join in entity order so output is identical to the
    // sequential run. Per-entity failures degrade to sentinel summaries.
    Answer answer_query(const std::string& query) {
        gateway_.set_phase(Phase::query);
        TokenUsage decompose_usage;
        QueryDecomposition decomp = decompose_query(query, &decompose_usage);

        const std::size_t n = decomp.entities.size();
        std::vector<EntityAnswerPart> parts(n);
        auto run_entity = [&](std::size_t i) {
            const std::string& entity = decomp.entities[i];
            EntityAnswerPart part;
            part.entity = entity;
            try {
                Subgraph sg = retriever_.retrieve_subgraph(entity);
                part.questions = formulate_questions(entity, query);
                part.summary = summarize_entity(sg, part.questions);
            } catch (const BudgetError&) {
                throw;
            } catch (const std::exception& e) {
                part.error = e.what();
                part.summary.entity = entity;
                part.summary.summary_text = kSentinelPrefix + entity;
                part.summary.sentinel = true;
                if (part.questions.questions.empty()) {
                    part.questions.entity = entity;
                    part.questions.questions.push_back(trim(query));
                    part.questions.fallback = true;
                }
            }
            parts[i] = std::move(part);
        };

        if (cfg_.parallel_entities && n > 1) {
            std::vector<std::future<void>> futs;
            futs.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                futs.push_back(std::async(std::launch::async, run_entity, i));
            for (auto& f : futs) f.get();
        } else {
            for (std::size_t i = 0; i < n; ++i) run_entity(i);
        }

        Answer answer = compose_answer(query, std::move(parts));
        answer.decompose_usage = decompose_usage;
        answer.usage += decompose_usage;
        answer.decomposition_fallback = decomp.fallback;
        return answer;
    }

    // Reply may be a JSON array, a comma-separated line, or one entity per
    // line; bullets and numbering are stripped.
    static std::vector<std::string> parse_entity_list(const std::string& reply) {
        std::vector<std::string> raw;
        auto t = trim(reply);
        nlohmann::json parsed = nlohmann::json::parse(t, nullptr, false);
        if (parsed.is_array()) {
            for (const auto& item : parsed)
                if (item.is_string()) raw.push_back(item.get<std::string>());
        } else {
            for (const auto& line : split_lines(t)) {
                std::string cleaned = strip_listing(line);
                if (cleaned.empty()) continue;
                if (cleaned.find(',') != std::string::npos) {
                    for (const auto& piece : split(cleaned, ','))
                        if (!trim_view(piece).empty()) raw.push_back(trim(piece));
                } else {
                    raw.push_back(cleaned);
                }
            }
        }
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (auto& name : raw)
            if (seen.insert(to_lower_ascii(name)).second) out.push_back(std::move(name));
        return out;
    }

    // A question is a non-empty line ending with '?' after normalization.
    static std::vector<std::string> parse_questions(const std::string& reply) {
        std::vector<std::string> out;
        for (const auto& line : split_lines(reply)) {
            std::string cleaned = strip_listing(line);
            if (cleaned.size() < 2 || cleaned.back() != '?') continue;
            out.push_back(cleaned);
        }
        return out;
    }

private:
    PromptInstance render_summary_prompt(const std::string& entity,
                                         const std::string& questions_block,
                                         const std::vector<std::string>& descriptions) const {
        std::string descriptions_block;
        for (const auto& d : descriptions) {
            descriptions_block += "- " + d + "\n";
        }
        return prompts_.render(TemplateId::summarize_entity, {{"entity", entity},
                                                              {"questions", questions_block},
                                                              {"descriptions", descriptions_block}});
    }

    static std::string strip_listing(std::string_view line) {
        std::string t = trim(line);
        while (!t.empty() && (t.front() == '-' || t.front() == '*' || t.front() == '"')) {
            t.erase(t.begin());
            t = trim(t);
        }
        // "1." / "2)" numbering
        std::size_t i = 0;
        while (i < t.size() && t[i] >= '0' && t[i] <= '9') ++i;
        if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) t = trim(t.substr(i + 1));
        while (!t.empty() && (t.back() == '"' || t.back() == ',')) t.pop_back();
        return trim(t);
    }

    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    const Retriever& retriever_;
    SummarizerConfig cfg_;
};

inline nlohmann::ordered_json answer_to_json(const Answer& answer) {
    nlohmann::ordered_json j;
    j["query"] = answer.query;
    j["answer"] = answer.text;
    nlohmann::ordered_json entities = nlohmann::ordered_json::array();
    for (const auto& p : answer.parts) {
        nlohmann::ordered_json e;
        e["entity"] = p.entity;
        e["questions"] = p.questions.questions;
        e["summary"] = p.summary.summary_text;
        e["sentinel"] = p.summary.sentinel;
        e["usage"] = {{"prompt_tokens", (p.questions.usage + p.summary.usage).prompt_tokens},
                      {"completion_tokens",
                       (p.questions.usage + p.summary.usage).completion_tokens}};
        entities.push_back(std::move(e));
    }
    j["entities"] = std::move(entities);
    j["usage"] = {{"prompt_tokens", answer.usage.prompt_tokens},
                  {"completion_tokens", answer.usage.completion_tokens},
                  {"total_tokens", answer.usage.total()}};
    j["decomposition_fallback"] = answer.decomposition_fallback;
    return j;
}

inline std::string answer_to_markdown(const Answer& answer) {
    std::string out = "# " + answer.query + "\n\n" + answer.text + "\n\n---\n";
    out += "## Entity summaries\n\n";
    for (const auto& p : answer.parts) {
        out += "### " + p.entity + "\n\n";
        for (const auto& q : p.questions.questions) out += "> " + q + "\n";
        out += "\n" + p.summary.summary_text + "\n\n";
    }
    out += "---\n_tokens: " + std::to_string(answer.usage.total()) + "_\n";
    return out;
}

}  // namespace fgrag
