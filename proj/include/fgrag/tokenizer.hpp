#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fgrag/common.hpp"

namespace fgrag {

// Byte span of one token within the source text, half-open.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::string id() const = 0;
    virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;

    std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

// "word-v1": a token is either a maximal run of [A-Za-z0-9] / non-ASCII bytes
// (keeps multibyte UTF-8 words whole) or a single other non-space character.
class WordTokenizer final : public Tokenizer {
public:
    std::string id() const override { return "word-v1"; }

    std::vector<TokenSpan> tokenize(std::string_view text) const override {
        std::vector<TokenSpan> out;
        std::size_t i = 0;
        const std::size_t n = text.size();
        while (i < n) {
            char c = text[i];
            if (is_space_byte(c)) {
                ++i;
                continue;
            }
            if (is_word_byte(c)) {
                std::size_t b = i;
                while (i < n && is_word_byte(text[i])) ++i;
                out.push_back({b, i});
            } else {
                out.push_back({i, i + 1});
                ++i;
            }
        }
        return out;
    }

private:
    static bool is_word_byte(char c) {
        unsigned char u = static_cast<unsigned char>(c);
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               u >= 0x80;
    }
};

inline std::shared_ptr<const Tokenizer> make_tokenizer(const std::string& tokenizer_id) {
    if (tokenizer_id == "word-v1") return std::make_shared<WordTokenizer>();
    throw ConfigError("unknown tokenizer_id: " + tokenizer_id);
}

}  // namespace fgrag
