#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "fgrag/common.hpp"

namespace fgrag {

enum class TemplateId {
    extract_elements,
    glean_more,
    decompose_query,
    formulate_questions,
    summarize_entity,
    compose_answer,
    judge_pair,
    generate_queries,
};

inline constexpr std::array<TemplateId, 8> kAllTemplates = {
    TemplateId::extract_elements,  TemplateId::glean_more,     TemplateId::decompose_query,
    TemplateId::formulate_questions, TemplateId::summarize_entity, TemplateId::compose_answer,
    TemplateId::judge_pair,        TemplateId::generate_queries,
};

inline const char* to_string(TemplateId id) {
    switch (id) {
        case TemplateId::extract_elements: return "extract_elements";
        case TemplateId::glean_more: return "glean_more";
        case TemplateId::decompose_query: return "decompose_query";
        case TemplateId::formulate_questions: return "formulate_questions";
        case TemplateId::summarize_entity: return "summarize_entity";
        case TemplateId::compose_answer: return "compose_answer";
        case TemplateId::judge_pair: return "judge_pair";
        case TemplateId::generate_queries: return "generate_queries";
    }
    return "unknown";
}

struct PromptInstance {
    TemplateId template_id;
    std::map<std::string, std::string> variables;
    std::string rendered;
};

namespace detail {

inline const char* default_template(TemplateId id) {
    switch (id) {
        case TemplateId::extract_elements:
            return
                "You are building a knowledge graph from text. Read the passage below and list\n"
                "every notable entity and every relationship between listed entities.\n"
                "\n"
                "Output one record per line, nothing else:\n"
                "  entity|<name>|<category>|<one-sentence description>\n"
                "  relation|<source entity>|<target entity>|<one-sentence description>|<strength 0-10>\n"
                "If the passage contains nothing extractable, output exactly: []\n"
                "\n"
                "Example passage: \"The Rhone glacier feeds Lake Geneva, which supplies drinking\n"
                "water to the city of Lausanne.\"\n"
                "Example output:\n"
                "entity|Rhone Glacier|place|An alpine glacier that is the source of the Rhone river system.\n"
                "entity|Lake Geneva|place|A large freshwater lake fed by the Rhone glacier.\n"
                "entity|Lausanne|place|A city that draws its drinking water from Lake Geneva.\n"
                "relation|Rhone Glacier|Lake Geneva|The glacier feeds the lake with meltwater.|8\n"
                "relation|Lake Geneva|Lausanne|The lake supplies drinking water to the city.|7\n"
                "\n"
                "Passage:\n"
                "{{chunk_text}}\n";
        case TemplateId::glean_more:
            return
                "You previously extracted entities and relationships from the passage below.\n"
                "Some items may have been missed. List ONLY new records that are not already in\n"
                "the known list, using the same format:\n"
                "  entity|<name>|<category>|<one-sentence description>\n"
                "  relation|<source entity>|<target entity>|<one-sentence description>|<strength 0-10>\n"
                "If nothing was missed, output exactly: []\n"
                "\n"
                "Passage:\n"
                "{{chunk_text}}\n"
                "\n"
                "Known records:\n"
                "{{known_items}}\n";
        case TemplateId::decompose_query:
            return
                "Extract the key entities mentioned in the question. An entity is a concrete\n"
                "thing, group, place, or concept the question is about. Answer with the entity\n"
                "names only, comma-separated on a single line, in order of appearance.\n"
                "\n"
                "Example question: \"Which festivals celebrate regional cuisine and local wine?\"\n"
                "Example answer: Festivals, Regional Cuisine, Local Wine\n"
                "\n"
                "Example question: \"What challenges do lighthouse keepers face during storms?\"\n"
                "Example answer: Lighthouse Keepers, Storms\n"
                "\n"
                "Question: \"{{query}}\"\n"
                "Answer:\n";
        case TemplateId::formulate_questions:
            return
                "You play the role of a curious reader researching the question below. Around\n"
                "the entity \"{{entity}}\", pose {{count}} short questions whose answers would\n"
                "help resolve the original question. One question per line, each ending with a\n"
                "question mark. No numbering, no commentary.\n"
                "\n"
                "Original question: \"{{query}}\"\n"
                "Entity: {{entity}}\n";
        case TemplateId::summarize_entity:
            return
                "Consolidate the retrieved notes below into a focused summary of the entity\n"
                "\"{{entity}}\". Address the reader questions where the notes allow. Write\n"
                "markdown with section headers; stay strictly within the given material.\n"
                "\n"
                "Reader questions:\n"
                "{{questions}}\n"
                "\n"
                "Retrieved notes:\n"
                "{{descriptions}}\n";
        case TemplateId::compose_answer:
            return
                "Answer the question using only the entity summaries below. Merge them into\n"
                "one coherent, well-structured markdown response that directly addresses the\n"
                "question from multiple angles.\n"
                "\n"
                "Question: \"{{query}}\"\n"
                "\n"
                "Entity summaries:\n"
                "{{summaries}}\n";
        case TemplateId::judge_pair:
            return
                "You are comparing two answers to the same question. For each criterion below,\n"
                "pick the better answer and explain briefly.\n"
                "\n"
                "Criteria:\n"
                "- Comprehensiveness: how thoroughly the answer addresses all aspects of the question.\n"
                "- Diversity: how varied and rich the perspectives and insights are.\n"
                "- Empowerment: how well the answer helps the reader understand and judge the topic.\n"
                "- Overall: cumulative performance across the three criteria above.\n"
                "\n"
                "Respond with exactly four blocks in this form:\n"
                "Comprehensiveness:\n"
                "Winner: Answer 1 (or Answer 2)\n"
                "Explanation: <one or two sentences>\n"
                "(then Diversity, Empowerment, Overall in the same form)\n"
                "\n"
                "Question: \"{{query}}\"\n"
                "\n"
                "Answer 1:\n"
                "{{answer_1}}\n"
                "\n"
                "Answer 2:\n"
                "{{answer_2}}\n";
        case TemplateId::generate_queries:
            return
                "You are preparing an evaluation over a document collection. A digest of the\n"
                "collection follows:\n"
                "{{corpus_digest}}\n"
                "\n"
                "Stage: {{stage}}\n"
                "\n"
                "If the stage is \"personas\": invent 5 distinct potential users of this\n"
                "collection, each with 5 distinct high-level tasks. Output lines in order:\n"
                "user: <one-line user description>\n"
                "task: <one-line task description>   (5 task lines after each user line)\n"
                "\n"
                "If the stage is \"queries\": for the user and task below, write {{count}}\n"
                "questions that require understanding the whole collection, one per line.\n"
                "user: {{user}}\n"
                "task: {{task}}\n";
    }
    return "";
}

}  // namespace detail

// Holds the prompt texts keyed by template id. Built-in defaults may be
// overridden per-template by <id>.txt files in a directory; a checksum of each
// effective template is exposed for run provenance.
class PromptLibrary {
public:
    PromptLibrary() {
        for (TemplateId id : kAllTemplates) texts_[id] = detail::default_template(id);
    }

    // Overrides from <dir>/<template_id>.txt; missing files keep the default.
    void load_overrides(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir))
            throw ConfigError("prompt directory not found: " + dir.string());
        for (TemplateId id : kAllTemplates) {
            auto path = dir / (std::string(to_string(id)) + ".txt");
            std::ifstream in(path, std::ios::binary);
            if (!in) continue;
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            if (trim_view(text).empty())
                throw ConfigError("prompt template file is empty: " + path.string());
            texts_[id] = std::move(text);
        }
    }

    const std::string& text(TemplateId id) const { return texts_.at(id); }

    std::map<std::string, std::string> checksums() const {
        std::map<std::string, std::string> out;
        for (const auto& [id, text] : texts_) out[to_string(id)] = hex_u64(fnv1a64(text));
        return out;
    }

    // Substitutes every {{name}} placeholder; rendering is total, so an
    // unbound placeholder is a configuration error.
    PromptInstance render(TemplateId id,
                          const std::map<std::string, std::string>& variables) const {
        const std::string& tmpl = texts_.at(id);
        std::string out;
        out.reserve(tmpl.size());
        std::size_t pos = 0;
        while (pos < tmpl.size()) {
            std::size_t open = tmpl.find("{{", pos);
            if (open == std::string::npos) {
                out.append(tmpl, pos, std::string::npos);
                break;
            }
            std::size_t close = tmpl.find("}}", open + 2);
            if (close == std::string::npos) {
                out.append(tmpl, pos, std::string::npos);
                break;
            }
            out.append(tmpl, pos, open - pos);
            std::string name = tmpl.substr(open + 2, close - open - 2);
            auto it = variables.find(name);
            if (it == variables.end())
                throw ConfigError(std::string("unbound placeholder {{") + name +
                                  "}} in template " + to_string(id));
            out.append(it->second);
            pos = close + 2;
        }
        return PromptInstance{id, variables, std::move(out)};
    }

private:
    std::map<TemplateId, std::string> texts_;
};

}  // namespace fgrag
