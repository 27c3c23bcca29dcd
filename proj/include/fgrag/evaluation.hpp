#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgrag/llm.hpp"

namespace fgrag {

enum class Metric { comprehensiveness, diversity, empowerment, overall };

inline constexpr std::array<Metric, 4> kAllMetrics = {
    Metric::comprehensiveness, Metric::diversity, Metric::empowerment, Metric::overall};

inline const char* to_string(Metric m) {
    switch (m) {
        case Metric::comprehensiveness: return "Comprehensiveness";
        case Metric::diversity: return "Diversity";
        case Metric::empowerment: return "Empowerment";
        case Metric::overall: return "Overall";
    }
    return "?";
}

// One pairwise verdict for one metric under one answer ordering. order_tag
// names the system whose answer was placed as Answer 1 in the prompt.
struct JudgeDecision {
    std::string query_id;
    Metric metric = Metric::overall;
    int winner = 0;  // 1 or 2, positional
    std::string explanation;
    std::string order_tag;
};

// Integer win counts per metric; percentages are derived at formatting time
// so the two columns always sum to exactly 100% and label swaps are exact.
struct WinRateCell {
    std::int64_t wins_a = 0;
    std::int64_t wins_b = 0;
    std::int64_t valid() const { return wins_a + wins_b; }
};

struct WinRateTable {
    std::string system_a;
    std::string system_b;
    std::map<Metric, WinRateCell> cells;
    std::size_t query_count = 0;
    std::size_t orderings = 0;   // valid judgings folded in (2 per query when none excluded)
    std::size_t excluded = 0;    // orderings dropped as unparseable

    double pct_a(Metric m) const {
        const WinRateCell& c = cells.at(m);
        return c.valid() == 0 ? 0.0 : 100.0 * static_cast<double>(c.wins_a) /
                                          static_cast<double>(c.valid());
    }
    double pct_b(Metric m) const {
        const WinRateCell& c = cells.at(m);
        return c.valid() == 0 ? 0.0 : 100.0 * static_cast<double>(c.wins_b) /
                                          static_cast<double>(c.valid());
    }

    std::string to_csv() const {
        char buf[64];
        std::string out = "metric," + system_a + "," + system_b + "\n";
        for (Metric m : kAllMetrics) {
            std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f", to_string(m), pct_a(m), pct_b(m));
            out += buf;
            out += "\n";
        }
        return out;
    }

    std::string to_markdown() const {
        char buf[64];
        std::string out = "| Metric | " + system_a + " | " + system_b + " |\n";
        out += "|---|---|---|\n";
        for (Metric m : kAllMetrics) {
            std::snprintf(buf, sizeof(buf), "| %s | %.2f%% | %.2f%% |", to_string(m), pct_a(m),
                          pct_b(m));
            out += buf;
            out += "\n";
        }
        out += "\nqueries: " + std::to_string(query_count) +
               ", valid judgings: " + std::to_string(orderings) +
               ", excluded: " + std::to_string(excluded) + "\n";
        return out;
    }
};

struct MultiHopItem {
    std::string query_id;
    std::string query;
    std::string gold;      // a word or entity
    std::string category;  // inference | comparison | temporal
};

struct CategoryScore {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) /
                                      static_cast<double>(total);
    }
};

struct MultiHopScore {
    std::map<std::string, CategoryScore> per_category;
    CategoryScore overall;
};

struct GeneratedQuery {
    std::string text;
    int user = 0;  // 1-based indices into the persona grid
    int task = 0;
    std::string user_desc;
    std::string task_desc;
};

struct QueryGenReport {
    std::size_t cells_total = 0;
    std::size_t cells_skipped = 0;
    std::vector<std::string> warnings;
};

// "reference" (the category's alternate label) normalizes to "inference".
inline std::string normalize_category(std::string_view category) {
    std::string c = to_lower_ascii(trim_view(category));
    if (c == "reference") return "inference";
    return c;
}

// Exact match ignoring case, outer whitespace trimmed; no partial credit.
inline bool multihop_match(std::string_view prediction, std::string_view gold) {
    return to_lower_ascii(trim_view(prediction)) == to_lower_ascii(trim_view(gold));
}

inline MultiHopScore score_multihop(const std::map<std::string, std::string>& predictions,
                                    const std::vector<MultiHopItem>& gold_items) {
    MultiHopScore score;
    for (const auto& item : gold_items) {
        if (item.gold.empty()) throw ConfigError("gold answer must be non-empty");
        const std::string cat = normalize_category(item.category);
        CategoryScore& c = score.per_category[cat];
        c.total += 1;
        score.overall.total += 1;
        auto it = predictions.find(item.query_id);
        if (it != predictions.end() && multihop_match(it->second, item.gold)) {
            c.correct += 1;
            score.overall.correct += 1;
        }
    }
    return score;
}

namespace detail {

// A metric word only counts as a block header when it sits at the front of
// the line (prefix junk like "**" or quotes allowed); metric words buried in
// explanation prose must not switch blocks.
inline std::optional<Metric> metric_from_header(std::string_view line) {
    const std::string l = to_lower_ascii(line);
    auto near_front = [&](const char* word) {
        const std::size_t pos = l.find(word);
        return pos != std::string::npos && pos <= 10;
    };
    if (near_front("comprehensiveness")) return Metric::comprehensiveness;
    if (near_front("diversity")) return Metric::diversity;
    if (near_front("empowerment")) return Metric::empowerment;
    if (near_front("overall")) return Metric::overall;
    return std::nullopt;
}

inline std::optional<int> winner_from_line(std::string_view line) {
    const std::string l = to_lower_ascii(line);
    const std::size_t w = l.find("winner");
    if (w == std::string::npos) return std::nullopt;
    const std::size_t a = l.find("answer", w);
    if (a == std::string::npos) return std::nullopt;
    for (std::size_t i = a + 6; i < l.size(); ++i) {
        if (l[i] == '1') return 1;
        if (l[i] == '2') return 2;
        if (l[i] != ' ' && l[i] != ':' && l[i] != '"' && l[i] != '\'') break;
    }
    return std::nullopt;
}

}  // namespace detail

// Lenient scanner for the judge reply: four metric blocks, each carrying a
// "Winner: Answer N" line and optionally an explanation. Missing any of the
// four metrics fails the parse.
inline std::optional<std::map<Metric, std::pair<int, std::string>>> parse_judge_reply(
    const std::string& reply) {
    std::map<Metric, std::pair<int, std::string>> out;
    std::optional<Metric> current;
    for (const auto& line : split_lines(reply)) {
        const auto header = detail::metric_from_header(line);
        const auto winner = detail::winner_from_line(line);
        if (header) current = header;
        if (winner && current && !out.count(*current)) {
            out[*current] = {*winner, ""};
        } else if (!winner && current && out.count(*current) && out[*current].second.empty()) {
            const std::string l = to_lower_ascii(line);
            const std::size_t e = l.find("explanation");
            if (e != std::string::npos) {
                std::size_t colon = line.find(':', e);
                if (colon != std::string::npos)
                    out[*current].second = trim(line.substr(colon + 1));
            }
        }
    }
    if (out.size() != kAllMetrics.size()) return std::nullopt;
    return out;
}

// Pairwise judging and QFS query generation on top of the gateway.
class Evaluator {
public:
    Evaluator(LlmGateway& gateway, const PromptLibrary& prompts, DecodingParams decoding = {})
        : gateway_(gateway), prompts_(prompts), decoding_(decoding) {}

    // Two judge calls per pair: system A's answer first, then system B's
    // first. A call whose reply stays unparseable after one retry is marked
    // invalid: its 4 decisions are excluded and counted.
    std::vector<JudgeDecision> judge_pair(const std::string& query_id, const std::string& query,
                                          const std::string& system_a, const std::string& answer_a,
                                          const std::string& system_b, const std::string& answer_b,
                                          std::size_t* excluded_orderings = nullptr) {
        if (trim_view(answer_a).empty() || trim_view(answer_b).empty())
            throw ConfigError("judge_pair requires two non-empty answers");
        std::vector<JudgeDecision> decisions;
        std::size_t excluded = 0;
        struct Ordering {
            const std::string* first;
            const std::string* second;
            const std::string* first_system;
        };
        for (const Ordering& ord : {Ordering{&answer_a, &answer_b, &system_a},
                                    Ordering{&answer_b, &answer_a, &system_b}}) {
            PromptInstance prompt = prompts_.render(TemplateId::judge_pair,
                                                    {{"query", query},
                                                     {"answer_1", *ord.first},
                                                     {"answer_2", *ord.second}});
            auto parsed = parse_judge_reply(gateway_.complete(prompt, decoding_).text);
            if (!parsed) parsed = parse_judge_reply(gateway_.complete(prompt, decoding_).text);
            if (!parsed) {
                ++excluded;
                continue;
            }
            for (const auto& [metric, verdict] : *parsed) {
                JudgeDecision d;
                d.query_id = query_id;
                d.metric = metric;
                d.winner = verdict.first;
                d.explanation = verdict.second;
                d.order_tag = *ord.first_system;
                decisions.push_back(std::move(d));
            }
        }
        if (excluded_orderings) *excluded_orderings += excluded;
        return decisions;
    }

    // 5 users x 5 tasks x 5 queries. Stage one asks for the persona grid;
    // stage two runs one call per (user, task) cell. A malformed cell is
    // retried once, then skipped and reported.
    std::vector<GeneratedQuery> generate_qfs_queries(const std::string& corpus_digest,
                                                     QueryGenReport* report = nullptr) {
        QueryGenReport local;
        QueryGenReport& rep = report ? *report : local;

        PromptInstance personas_prompt =
            prompts_.render(TemplateId::generate_queries, {{"corpus_digest", corpus_digest},
                                                           {"stage", "personas"},
                                                           {"user", ""},
                                                           {"task", ""},
                                                           {"count", "5"}});
        auto grid = parse_personas(gateway_.complete(personas_prompt, decoding_).text);
        if (!grid) {
            grid = parse_personas(gateway_.complete(personas_prompt, decoding_).text);
            if (!grid) throw ProtocolError("persona generation stayed unparseable after retry");
        }

        std::vector<GeneratedQuery> queries;
        for (int u = 0; u < 5; ++u) {
            for (int t = 0; t < 5; ++t) {
                rep.cells_total += 1;
                const std::string& user_desc = (*grid)[static_cast<std::size_t>(u)].first;
                const std::string& task_desc =
                    (*grid)[static_cast<std::size_t>(u)].second[static_cast<std::size_t>(t)];
                PromptInstance cell_prompt = prompts_.render(
                    TemplateId::generate_queries, {{"corpus_digest", corpus_digest},
                                                   {"stage", "queries"},
                                                   {"user", user_desc},
                                                   {"task", task_desc},
                                                   {"count", "5"}});
                auto cell = parse_query_lines(gateway_.complete(cell_prompt, decoding_).text);
                if (cell.empty())
                    cell = parse_query_lines(gateway_.complete(cell_prompt, decoding_).text);
                if (cell.empty()) {
                    rep.cells_skipped += 1;
                    rep.warnings.push_back("cell (" + std::to_string(u + 1) + "," +
                                           std::to_string(t + 1) + ") skipped: no queries parsed");
                    continue;
                }
                if (cell.size() > 5) cell.resize(5);
                for (const auto& q : cell) {
                    GeneratedQuery g;
                    g.text = q;
                    g.user = u + 1;
                    g.task = t + 1;
                    g.user_desc = user_desc;
                    g.task_desc = task_desc;
                    queries.push_back(std::move(g));
                }
            }
        }
        return queries;
    }

private:
    // Expects "user:" lines each followed by its "task:" lines; exactly a
    // 5x5 grid after parsing.
    static std::optional<std::vector<std::pair<std::string, std::vector<std::string>>>>
    parse_personas(const std::string& reply) {
        std::vector<std::pair<std::string, std::vector<std::string>>> grid;
        for (const auto& raw : split_lines(reply)) {
            const std::string line = trim(raw);
            const std::string lower = to_lower_ascii(line);
            if (lower.rfind("user:", 0) == 0) {
                grid.emplace_back(trim(line.substr(5)), std::vector<std::string>{});
            } else if (lower.rfind("task:", 0) == 0) {
                if (grid.empty()) return std::nullopt;
                grid.back().second.push_back(trim(line.substr(5)));
            }
        }
        if (grid.size() != 5) return std::nullopt;
        for (const auto& [user, tasks] : grid)
            if (user.empty() || tasks.size() != 5) return std::nullopt;
        return grid;
    }

    static std::vector<std::string> parse_query_lines(const std::string& reply) {
        std::vector<std::string> out;
        for (const auto& raw : split_lines(reply)) {
            std::string t = trim(raw);
            if (t.empty()) continue;
            std::size_t i = 0;
            while (i < t.size() && ((t[i] >= '0' && t[i] <= '9') || t[i] == '.' || t[i] == ')'))
                ++i;
            t = trim(t.substr(i));
            if (t.size() > 3) out.push_back(t);
        }
        return out;
    }

    LlmGateway& gateway_;
    const PromptLibrary& prompts_;
    DecodingParams decoding_;
};

// ---------------------------------------------------------------------------
// JSONL exchange formats
// ---------------------------------------------------------------------------

// Answers file line: {"query_id": ..., "system": ..., "text": ...}; an
// optional "query" field carries the question text for judging.
struct AnswerRecord {
    std::string query_id;
    std::string system;
    std::string text;
    std::string query;
};

inline std::vector<AnswerRecord> read_answers_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read answers file: " + path.string());
    std::vector<AnswerRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + " is not JSON");
        AnswerRecord r;
        try {
            r.query_id = j.at("query_id").get<std::string>();
            r.system = j.at("system").get<std::string>();
            r.text = j.at("text").get<std::string>();
            r.query = j.value("query", "");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + " " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Gold file line: {"query_id", "query", "answer" (or "gold"), "category"}.
inline std::vector<MultiHopItem> read_multihop_gold(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read gold file: " + path.string());
    std::vector<MultiHopItem> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim_view(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + " is not JSON");
        MultiHopItem item;
        try {
            item.query_id = j.at("query_id").get<std::string>();
            item.query = j.value("query", "");
            item.gold = j.contains("answer") ? j["answer"].get<std::string>()
                                             : j.at("gold").get<std::string>();
            item.category = j.value("category", "inference");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + " " + e.what());
        }
        if (item.gold.empty())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + " empty gold answer");
        out.push_back(std::move(item));
    }
    return out;
}

inline nlohmann::ordered_json decision_to_json(const JudgeDecision& d) {
    nlohmann::ordered_json j;
    j["query_id"] = d.query_id;
    j["metric"] = to_string(d.metric);
    j["winner"] = d.winner == 1 ? "answer_1" : "answer_2";
    j["order_tag"] = d.order_tag;
    j["explanation"] = d.explanation;
    return j;
}

// Per metric: a system's win% is its wins over the valid judgings of that
// metric, across both orderings. Excluded orderings never enter denominators.
inline WinRateTable compute_win_rates(const std::vector<JudgeDecision>& decisions,
                                      const std::string& system_a, const std::string& system_b,
                                      std::size_t excluded = 0) {
    if (decisions.empty()) throw ConfigError("compute_win_rates requires at least one decision");
    WinRateTable table;
    table.system_a = system_a;
    table.system_b = system_b;
    table.excluded = excluded;
    for (Metric m : kAllMetrics) table.cells[m];  // materialize all four rows

    std::set<std::string> queries;
    std::set<std::pair<std::string, std::string>> orderings;
    for (const auto& d : decisions) {
        if (d.winner != 1 && d.winner != 2)
            throw ConfigError("judge decision carries an invalid winner index");
        const bool first_is_a = d.order_tag == system_a;
        if (!first_is_a && d.order_tag != system_b)
            throw ConfigError("judge decision order_tag names an unknown system: " + d.order_tag);
        const bool a_won = (d.winner == 1) == first_is_a;
        WinRateCell& cell = table.cells[d.metric];
        if (a_won)
            cell.wins_a += 1;
        else
            cell.wins_b += 1;
        queries.insert(d.query_id);
        orderings.insert({d.query_id, d.order_tag});
    }
    table.query_count = queries.size();
    table.orderings = orderings.size();
    return table;
}

}  // namespace fgrag
