#pragma once

// Remote chat-completions backend. Kept out of llm.hpp so translation units
// that only need the mock do not pull in the HTTP stack.

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fgrag/llm.hpp"

namespace fgrag {

struct HttpBackendConfig {
    std::string base_url;     // e.g. http://127.0.0.1:8080/v1
    std::string api_key;      // sent as a bearer token when non-empty
    std::string model;        // chat model name
    std::string embed_model;  // embedding model name
    std::size_t embedding_dim = 0;  // expected dim; 0 = accept the first reply's
    int timeout_seconds = 120;

    // Environment contract: FGRAG_API_BASE, FGRAG_API_KEY, FGRAG_MODEL,
    // FGRAG_EMBED_MODEL. Explicitly-set fields win over the environment.
    static HttpBackendConfig from_env(HttpBackendConfig cfg) {
        auto env = [](const char* name) -> std::string {
            const char* v = std::getenv(name);
            return v ? v : "";
        };
        if (cfg.base_url.empty()) cfg.base_url = env("FGRAG_API_BASE");
        if (cfg.api_key.empty()) cfg.api_key = env("FGRAG_API_KEY");
        if (cfg.model.empty()) cfg.model = env("FGRAG_MODEL");
        if (cfg.embed_model.empty()) cfg.embed_model = env("FGRAG_EMBED_MODEL");
        return cfg;
    }
};

// POSTs to {base}/chat/completions and {base}/embeddings with a bearer token;
// expects a usage block in replies and falls back to local token counting
// when the server omits it.
class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg,
                         std::shared_ptr<const Tokenizer> tokenizer = nullptr)
        : cfg_(std::move(cfg)),
          tokenizer_(tokenizer ? std::move(tokenizer) : make_tokenizer("word-v1")) {
        if (cfg_.base_url.empty())
            throw ConfigError("http backend requires a base URL (FGRAG_API_BASE)");
        if (cfg_.model.empty()) throw ConfigError("http backend requires a model name");
        parse_base_url();
    }

    std::string id() const override { return "http:" + cfg_.model; }
    std::size_t embedding_dim() const override { return cfg_.embedding_dim; }

    CompletionResult complete(const PromptInstance& prompt,
                              const DecodingParams& decoding) override {
        nlohmann::json body;
        body["model"] = cfg_.model;
        body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt.rendered}}});
        body["temperature"] = decoding.temperature;
        body["max_tokens"] = decoding.max_tokens;
        body["seed"] = decoding.seed;

        nlohmann::json reply = post_json("/chat/completions", body);
        CompletionResult res;
        try {
            res.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("malformed chat completion reply: ") + e.what());
        }
        res.usage = usage_from_reply(reply, prompt.rendered, res.text);
        res.backend_id = id();
        return res;
    }

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        if (cfg_.embed_model.empty())
            throw ConfigError("http backend requires an embedding model name");
        nlohmann::json body;
        body["model"] = cfg_.embed_model;
        body["input"] = texts;

        nlohmann::json reply = post_json("/embeddings", body);
        std::vector<EmbeddingVector> out;
        try {
            for (const auto& item : reply.at("data")) {
                EmbeddingVector v = item.at("embedding").get<EmbeddingVector>();
                out.push_back(std::move(v));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("malformed embeddings reply: ") + e.what());
        }
        if (!out.empty() && cfg_.embedding_dim == 0) cfg_.embedding_dim = out.front().size();
        return out;
    }

private:
    void parse_base_url() {
        const std::string& url = cfg_.base_url;
        std::size_t scheme_end = url.find("://");
        if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0)
            throw ConfigError("base URL must be http://host[:port][/prefix]: " + url);
        std::size_t path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = url;
            path_prefix_.clear();
        } else {
            host_ = url.substr(0, path_start);
            path_prefix_ = url.substr(path_start);
            while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
        }
    }

    nlohmann::json post_json(const std::string& endpoint, const nlohmann::json& body) {
        httplib::Client client(host_);
        client.set_connection_timeout(cfg_.timeout_seconds, 0);
        client.set_read_timeout(cfg_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

        auto res = client.Post(path_prefix_ + endpoint, headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("request to " + host_ + endpoint + " failed: " +
                                 httplib::to_string(res.error()));
        if (res->status >= 500)
            throw TransportError("server error " + std::to_string(res->status) + " from " +
                                 endpoint);
        if (res->status != 200)
            throw ProtocolError("unexpected status " + std::to_string(res->status) + " from " +
                                endpoint + ": " + res->body.substr(0, 200));
        nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded())
            throw ProtocolError("reply from " + endpoint + " is not valid JSON");
        return parsed;
    }

    TokenUsage usage_from_reply(const nlohmann::json& reply, const std::string& prompt_text,
                                const std::string& completion_text) const {
        TokenUsage usage;
        if (reply.contains("usage") && reply["usage"].is_object()) {
            const auto& u = reply["usage"];
            usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
            usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
        } else {
            usage.prompt_tokens = static_cast<std::int64_t>(tokenizer_->count(prompt_text));
            usage.completion_tokens =
                static_cast<std::int64_t>(tokenizer_->count(completion_text));
        }
        if (usage.prompt_tokens < 0 || usage.completion_tokens < 0)
            throw ProtocolError("negative token counts in usage block");
        return usage;
    }

    HttpBackendConfig cfg_;
    std::shared_ptr<const Tokenizer> tokenizer_;
    std::string host_;
    std::string path_prefix_;
};

}  // namespace fgrag
