#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fgrag/common.hpp"
#include "fgrag/prompts.hpp"
#include "fgrag/tokenizer.hpp"
#include "fgrag/usage.hpp"

namespace fgrag {

using EmbeddingVector = std::vector<float>;

struct DecodingParams {
    double temperature = 0.0;
    int max_tokens = 4096;
    std::uint64_t seed = 0;
};

struct CompletionResult {
    std::string text;
    TokenUsage usage;
    std::string backend_id;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string id() const = 0;
    virtual CompletionResult complete(const PromptInstance& prompt,
                                      const DecodingParams& decoding) = 0;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::size_t embedding_dim() const = 0;
};

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

// One scripted reply: matches a template id plus substring conditions over the
// prompt variables. First matching rule wins; unmatched calls fall through to
// the deterministic per-template generator. max_uses > 0 retires the rule
// after that many hits, which scripts call sequences.
struct MockScriptRule {
    std::optional<TemplateId> template_id;
    std::vector<std::pair<std::string, std::string>> var_contains;  // (variable, substring)
    std::string reply;
    int max_uses = -1;  // -1 = unlimited
    int uses = 0;
};

struct MockCallRecord {
    TemplateId template_id;
    std::map<std::string, std::string> variables;
    std::string rendered;
    std::string reply;
};

namespace mockgen {

inline std::string title_case(std::string_view w) {
    std::string out(w);
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 32);
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] >= 'A' && out[i] <= 'Z') out[i] = static_cast<char>(out[i] + 32);
    return out;
}

// Distinct alphabetic words of the text, >= min_len chars, appearance order.
inline std::vector<std::string> salient_words(std::string_view text, std::size_t min_len,
                                              std::size_t cap) {
    WordTokenizer tok;
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& span : tok.tokenize(text)) {
        std::string_view w = text.substr(span.begin, span.end - span.begin);
        if (w.size() < min_len) continue;
        bool alpha = true;
        for (char c : w)
            if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) alpha = false;
        if (!alpha) continue;
        std::string key = to_lower_ascii(w);
        if (!seen.insert(key).second) continue;
        out.push_back(title_case(w));
        if (out.size() >= cap) break;
    }
    return out;
}

inline std::string ctx_tag(std::string_view text, std::uint64_t seed) {
    return hex_u64(fnv1a64(text) ^ (seed * 0x9E3779B97F4A7C15ull + 1)).substr(0, 8);
}

}  // namespace mockgen

// Offline backend: (template_id, variables, seed) fully determines the reply
// text and usage. Usage is computed with the corpus tokenizer so token reports
// stay comparable with remote runs. Keeps a call log for instrumented tests.
class MockBackend final : public LlmBackend {
public:
    explicit MockBackend(std::uint64_t seed = 0, std::size_t dim = 64,
                         std::shared_ptr<const Tokenizer> tokenizer = nullptr)
        : seed_(seed),
          dim_(dim),
          tokenizer_(tokenizer ? std::move(tokenizer) : make_tokenizer("word-v1")) {}

    std::string id() const override { return "mock"; }
    std::size_t embedding_dim() const override { return dim_; }
    std::uint64_t seed() const { return seed_; }

    void add_script(MockScriptRule rule) {
        std::lock_guard<std::mutex> lock(mu_);
        scripts_.push_back(std::move(rule));
    }

    void script_reply(TemplateId id, std::string reply) {
        add_script(MockScriptRule{id, {}, std::move(reply)});
    }

    std::vector<MockCallRecord> call_log() const {
        std::lock_guard<std::mutex> lock(mu_);
        return log_;
    }

    void clear_log() {
        std::lock_guard<std::mutex> lock(mu_);
        log_.clear();
    }

    CompletionResult complete(const PromptInstance& prompt, const DecodingParams&) override {
        std::string reply = scripted_reply(prompt).value_or(default_reply(prompt));
        CompletionResult res;
        res.text = reply;
        res.usage.prompt_tokens = static_cast<std::int64_t>(tokenizer_->count(prompt.rendered));
        res.usage.completion_tokens = static_cast<std::int64_t>(tokenizer_->count(reply));
        res.backend_id = id();
        {
            std::lock_guard<std::mutex> lock(mu_);
            log_.push_back({prompt.template_id, prompt.variables, prompt.rendered, reply});
        }
        return res;
    }

    // Hash-to-unit-vector embedding: identical text maps to an identical
    // vector, independent of call order.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

    EmbeddingVector embed_one(std::string_view text) const {
        std::uint64_t state = fnv1a64(text) ^ (seed_ * 0x9E3779B97F4A7C15ull);
        std::vector<double> v(dim_);
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            std::uint64_t u = splitmix64(state);
            // 53 uniform bits -> [-1, 1)
            v[i] = static_cast<double>(u >> 11) * (2.0 / 9007199254740992.0) - 1.0;
            norm_sq += v[i] * v[i];
        }
        EmbeddingVector out(dim_);
        if (norm_sq < 1e-24) {
            out[0] = 1.0f;
            return out;
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(v[i] * inv);
        return out;
    }

private:
    std::optional<std::string> scripted_reply(const PromptInstance& p) {
        std::lock_guard<std::mutex> lock(mu_);
        for (auto& rule : scripts_) {
            if (rule.template_id && *rule.template_id != p.template_id) continue;
            if (rule.max_uses >= 0 && rule.uses >= rule.max_uses) continue;
            bool ok = true;
            for (const auto& [var, needle] : rule.var_contains) {
                auto it = p.variables.find(var);
                if (it == p.variables.end() || it->second.find(needle) == std::string::npos) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                rule.uses += 1;
                return rule.reply;
            }
        }
        return std::nullopt;
    }

    std::string var(const PromptInstance& p, const std::string& name) const {
        auto it = p.variables.find(name);
        return it == p.variables.end() ? std::string() : it->second;
    }

    std::string default_reply(const PromptInstance& p) const {
        switch (p.template_id) {
            case TemplateId::extract_elements: return gen_extraction(var(p, "chunk_text"));
            case TemplateId::glean_more: return "[]";
            case TemplateId::decompose_query: return gen_decompose(var(p, "query"));
            case TemplateId::formulate_questions:
                return gen_questions(var(p, "entity"), var(p, "query"), var(p, "count"));
            case TemplateId::summarize_entity:
                return gen_summary(var(p, "entity"), var(p, "descriptions"));
            case TemplateId::compose_answer:
                return gen_answer(var(p, "query"), var(p, "summaries"));
            case TemplateId::judge_pair:
                return gen_judgement(var(p, "answer_1"), var(p, "answer_2"));
            case TemplateId::generate_queries:
                return gen_queries(p);
        }
        return "(" + mockgen::ctx_tag(p.rendered, seed_) + ") " + p.rendered.substr(0, 120);
    }

    std::string gen_extraction(const std::string& chunk_text) const {
        auto words = mockgen::salient_words(chunk_text, 4, 8);
        if (words.empty()) return "[]";
        const std::string ctx = mockgen::ctx_tag(chunk_text, seed_);
        static const char* kTypes[] = {"concept", "person", "place", "organization"};
        std::string out;
        for (const auto& w : words) {
            const char* type = kTypes[(fnv1a64(to_lower_ascii(w)) + seed_) % 4];
            out += "entity|" + w + "|" + type + "|" + w +
                   " is discussed in this passage (ctx " + ctx + ").\n";
        }
        const std::size_t pairs = std::min<std::size_t>(words.size() - 1, 4);
        for (std::size_t i = 0; i < pairs; ++i) {
            out += "relation|" + words[i] + "|" + words[i + 1] + "|" + words[i] +
                   " relates to " + words[i + 1] + " in this passage (ctx " + ctx + ").|5\n";
        }
        return out;
    }

    std::string gen_decompose(const std::string& query) const {
        auto words = mockgen::salient_words(query, 5, 5);
        if (words.empty()) return trim(query);
        std::string out;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) out += ", ";
            out += words[i];
        }
        return out;
    }

    std::string gen_questions(const std::string& entity, const std::string& query,
                              const std::string& count) const {
        std::size_t m = 3;
        try {
            if (!count.empty()) m = std::max<std::size_t>(1, std::stoul(count));
        } catch (...) {
        }
        auto topic_words = mockgen::salient_words(query, 4, 2);
        const std::string topic = topic_words.empty() ? "this topic" : topic_words.front();
        const std::uint64_t h = fnv1a64(entity) ^ seed_;
        static const char* kPatterns[] = {
            "What role does %E% play with respect to %T%?",
            "Which factors connect %E% to %T%?",
            "How has %E% shaped outcomes around %T%?",
            "What evidence in the sources describes %E%?",
            "What challenges involve %E% in the context of %T%?",
        };
        std::string out;
        for (std::size_t i = 0; i < m; ++i) {
            std::string q = kPatterns[(h + i) % 5];
            replace_all(q, "%E%", entity);
            replace_all(q, "%T%", topic);
            out += q + "\n";
        }
        return out;
    }

    std::string gen_summary(const std::string& entity, const std::string& descriptions) const {
        auto lines = split_lines(descriptions);
        std::size_t k = 0;
        for (const auto& l : lines)
            if (!trim_view(l).empty()) ++k;
        const std::string ctx = mockgen::ctx_tag(descriptions, seed_ ^ fnv1a64(entity));
        std::string out = "## " + entity + "\n";
        out += "Synthesis of " + std::to_string(k) + " retrieved descriptions (ctx " + ctx +
               ").\n\n### Key points\n";
        std::size_t shown = 0;
        for (const auto& l : lines) {
            auto t = trim(l);
            if (t.empty()) continue;
            if (t.size() > 96) t = t.substr(0, 96) + "...";
            out += "- " + t + "\n";
            if (++shown == 3) break;
        }
        if (shown == 0) out += "- (no retrieved material)\n";
        out += "\n### Assessment\n" + entity +
               " is characterized by the retrieved material above.\n";
        return out;
    }

    std::string gen_answer(const std::string& query, const std::string& summaries) const {
        auto lines = split_lines(summaries);
        std::size_t sections = 0;
        std::string bullets;
        for (const auto& l : lines) {
            if (l.rfind("## ", 0) == 0) {
                ++sections;
                bullets += "- Drawing on " + l.substr(3) + "\n";
            }
        }
        const std::string ctx = mockgen::ctx_tag(query + summaries, seed_);
        std::string out = "# Answer (ctx " + ctx + ")\n\n";
        out += "Addressing: " + trim(query) + "\n\n" + bullets;
        out += "\nSynthesized from " + std::to_string(sections) + " entity summaries.\n";
        return out;
    }

    // Content-keyed verdict: the winner is a function of the answer texts
    // only, so it is stable under position swapping.
    std::string gen_judgement(const std::string& a1, const std::string& a2) const {
        static const char* kMetrics[] = {"Comprehensiveness", "Diversity", "Empowerment",
                                         "Overall"};
        std::string out;
        for (const char* metric : kMetrics) {
            const std::uint64_t h1 = fnv1a64(a1) ^ fnv1a64(metric) ^ seed_;
            const std::uint64_t h2 = fnv1a64(a2) ^ fnv1a64(metric) ^ seed_;
            const int winner = h1 >= h2 ? 1 : 2;
            out += std::string(metric) + ":\n";
            out += "Winner: Answer " + std::to_string(winner) + "\n";
            out += "Explanation: Answer " + std::to_string(winner) +
                   " reads stronger on this criterion (ctx " +
                   hex_u64(h1 ^ h2).substr(0, 8) + ").\n";
        }
        return out;
    }

    std::string gen_queries(const PromptInstance& p) const {
        const std::string stage = var(p, "stage");
        const std::string digest = var(p, "corpus_digest");
        auto words = mockgen::salient_words(digest, 4, 10);
        if (words.empty()) words = {"Sources"};
        if (stage == "personas") {
            static const char* kRoles[] = {"journalist", "teacher", "analyst", "archivist",
                                           "consultant"};
            std::string out;
            for (int u = 0; u < 5; ++u) {
                out += std::string("user: A ") + kRoles[u] + " studying " +
                       words[(u) % words.size()] + " across the collection\n";
                for (int t = 0; t < 5; ++t) {
                    out += "task: Survey " + words[(u + t + 1) % words.size()] +
                           " from angle " + std::to_string(t + 1) + "\n";
                }
            }
            return out;
        }
        std::size_t m = 5;
        try {
            const std::string c = var(p, "count");
            if (!c.empty()) m = std::max<std::size_t>(1, std::stoul(c));
        } catch (...) {
        }
        const std::string user = var(p, "user");
        const std::string task = var(p, "task");
        const std::string ctx = mockgen::ctx_tag(user + "|" + task, seed_);
        std::string out;
        for (std::size_t i = 0; i < m; ++i) {
            out += "What does the collection reveal about " +
                   words[(fnv1a64(task) + i) % words.size()] + " for " +
                   (user.empty() ? "a reader" : user) + " (angle " + std::to_string(i + 1) +
                   ", ctx " + ctx + ")?\n";
        }
        return out;
    }

    static void replace_all(std::string& s, std::string_view needle, std::string_view repl) {
        std::size_t pos = 0;
        while ((pos = s.find(needle, pos)) != std::string::npos) {
            s.replace(pos, needle.size(), repl);
            pos += repl.size();
        }
    }

    std::uint64_t seed_;
    std::size_t dim_;
    std::shared_ptr<const Tokenizer> tokenizer_;
    mutable std::mutex mu_;
    std::vector<MockScriptRule> scripts_;
    std::vector<MockCallRecord> log_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct GatewayConfig {
    int max_attempts = 3;        // total tries per call, transport errors only
    int backoff_base_ms = 100;   // doubled per retry
    std::int64_t token_budget = 0;  // 0 = unlimited
    int max_inflight = 4;
};

// Single entry point for completions and embeddings. Adds retry with bounded
// exponential backoff, an optional token budget, phase-tagged usage
// accounting, and an in-flight cap shared by all callers.
class LlmGateway {
public:
    LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayConfig cfg = {},
               std::shared_ptr<const Tokenizer> tokenizer = nullptr)
        : backend_(std::move(backend)),
          cfg_(cfg),
          tokenizer_(tokenizer ? std::move(tokenizer) : make_tokenizer("word-v1")),
          inflight_(std::max(1, cfg.max_inflight)) {
        if (!backend_) throw ConfigError("gateway requires a backend");
        if (cfg_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    }

    Phase phase() const { return phase_.load(); }
    void set_phase(Phase p) { phase_.store(p); }

    LlmBackend& backend() { return *backend_; }
    std::size_t embedding_dim() const { return backend_->embedding_dim(); }
    const Tokenizer& tokenizer() const { return *tokenizer_; }

    CompletionResult complete(const PromptInstance& prompt, const DecodingParams& decoding = {}) {
        InflightGuard guard(inflight_);
        CompletionResult res = with_retries([&] { return backend_->complete(prompt, decoding); });
        if (res.text.empty())
            throw ProtocolError(std::string("backend returned empty completion for template ") +
                                to_string(prompt.template_id));
        ledger_.record(phase_.load(), to_string(prompt.template_id), res.usage);
        completion_calls_.fetch_add(1);
        enforce_budget();
        return res;
    }

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) {
        if (texts.empty()) return {};
        for (const auto& t : texts)
            if (t.empty()) throw ConfigError("embed() requires non-empty texts");
        InflightGuard guard(inflight_);
        auto vectors = with_retries([&] { return backend_->embed(texts); });
        if (vectors.size() != texts.size())
            throw ProtocolError("backend returned wrong number of embeddings");
        const std::size_t dim = backend_->embedding_dim();
        for (const auto& v : vectors) {
            if (v.size() != dim) throw ConfigError("embedding dimension mismatch");
            for (float x : v)
                if (!std::isfinite(x)) throw ProtocolError("non-finite embedding component");
        }
        TokenUsage usage;
        for (const auto& t : texts)
            usage.prompt_tokens += static_cast<std::int64_t>(tokenizer_->count(t));
        ledger_.record(phase_.load(), "embed", usage);
        embed_calls_.fetch_add(1);
        enforce_budget();
        return vectors;
    }

    EmbeddingVector embed_one(const std::string& text) { return embed({text}).front(); }

    TokenUsageReport usage_report() const { return ledger_.report(); }
    void reset_usage() { ledger_.reset(); }
    std::int64_t completion_calls() const { return completion_calls_.load(); }
    std::int64_t embed_calls() const { return embed_calls_.load(); }

private:
    struct InflightGuard {
        explicit InflightGuard(std::counting_semaphore<256>& sem) : sem_(sem) { sem_.acquire(); }
        ~InflightGuard() { sem_.release(); }
        std::counting_semaphore<256>& sem_;
    };

    template <typename Fn>
    auto with_retries(Fn&& fn) -> decltype(fn()) {
        int attempt = 0;
        for (;;) {
            try {
                return fn();
            } catch (const TransportError&) {
                ++attempt;
                if (attempt >= cfg_.max_attempts) throw;
                const auto delay = std::chrono::milliseconds(
                    static_cast<long>(cfg_.backoff_base_ms) * (1L << (attempt - 1)));
                if (delay.count() > 0) std::this_thread::sleep_for(delay);
            }
        }
    }

    void enforce_budget() {
        if (cfg_.token_budget > 0 && ledger_.total_tokens() > cfg_.token_budget)
            throw BudgetError("token budget exceeded: " + std::to_string(ledger_.total_tokens()) +
                              " > " + std::to_string(cfg_.token_budget));
    }

    std::shared_ptr<LlmBackend> backend_;
    GatewayConfig cfg_;
    std::shared_ptr<const Tokenizer> tokenizer_;
    UsageLedger ledger_;
    std::atomic<Phase> phase_{Phase::indexing};
    std::atomic<std::int64_t> completion_calls_{0};
    std::atomic<std::int64_t> embed_calls_{0};
    std::counting_semaphore<256> inflight_;
};

}  // namespace fgrag
