#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <ostream>
#include <string>

#include <json.hpp>

namespace fgrag {

// Which half of the run a call belongs to. Mirrors the two headline numbers
// an efficiency report carries: graph-indexing tokens vs. query tokens.
enum class Phase { indexing, query };

inline const char* to_string(Phase p) {
    return p == Phase::indexing ? "indexing" : "query";
}

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    std::int64_t total() const { return prompt_tokens + completion_tokens; }

    TokenUsage& operator+=(const TokenUsage& o) {
        prompt_tokens += o.prompt_tokens;
        completion_tokens += o.completion_tokens;
        return *this;
    }
    friend TokenUsage operator+(TokenUsage a, const TokenUsage& b) { return a += b; }
    friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct PhaseRollup {
    TokenUsage usage;
    std::int64_t calls = 0;

    friend bool operator==(const PhaseRollup&, const PhaseRollup&) = default;
};

struct TokenUsageReport {
    PhaseRollup indexing;
    PhaseRollup query;
    std::map<std::string, PhaseRollup> per_template;

    TokenUsage total() const { return indexing.usage + query.usage; }
    std::int64_t total_calls() const { return indexing.calls + query.calls; }

    // Table-shaped headline: one number per phase.
    void print_headline(std::ostream& os) const {
        os << "Graph Indexing Tokens: " << indexing.usage.total() << "\n";
        os << "Query Tokens: " << query.usage.total() << "\n";
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["indexing"] = {{"prompt_tokens", indexing.usage.prompt_tokens},
                         {"completion_tokens", indexing.usage.completion_tokens},
                         {"calls", indexing.calls}};
        j["query"] = {{"prompt_tokens", query.usage.prompt_tokens},
                      {"completion_tokens", query.usage.completion_tokens},
                      {"calls", query.calls}};
        nlohmann::ordered_json per;
        for (const auto& [name, roll] : per_template) {
            per[name] = {{"prompt_tokens", roll.usage.prompt_tokens},
                         {"completion_tokens", roll.usage.completion_tokens},
                         {"calls", roll.calls}};
        }
        j["per_template"] = per;
        j["total_tokens"] = total().total();
        return j;
    }
};

// Thread-safe accounting. Every recorded call lands in exactly one phase
// rollup and one per-template rollup; report totals are exact integer sums.
class UsageLedger {
public:
    void record(Phase phase, const std::string& template_id, const TokenUsage& usage) {
        std::lock_guard<std::mutex> lock(mu_);
        PhaseRollup& roll = phase == Phase::indexing ? report_.indexing : report_.query;
        roll.usage += usage;
        roll.calls += 1;
        PhaseRollup& tmpl = report_.per_template[template_id];
        tmpl.usage += usage;
        tmpl.calls += 1;
    }

    TokenUsageReport report() const {
        std::lock_guard<std::mutex> lock(mu_);
        return report_;
    }

    std::int64_t total_tokens() const {
        std::lock_guard<std::mutex> lock(mu_);
        return report_.total().total();
    }

    void reset() {
        std::lock_guard<std::mutex> lock(mu_);
        report_ = TokenUsageReport{};
    }

private:
    mutable std::mutex mu_;
    TokenUsageReport report_;
};

}  // namespace fgrag
