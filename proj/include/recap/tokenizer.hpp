#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "recap/errors.hpp"
#include "recap/text.hpp"

namespace recap {

// Reference tokenizer contract. One tokenizer is fixed per run and its id is
// recorded in every manifest; length statistics and prompt truncation are only
// comparable under the same tokenizer.
class TokenizerRef {
public:
    virtual ~TokenizerRef() = default;
    virtual std::string tokenizer_id() const = 0;
    virtual size_t count(std::string_view text) const = 0;
    // First n tokens of `text`, re-serialized. Used by prompt truncation.
    virtual std::string take(std::string_view text, size_t n) const = 0;
};

class WhitespaceTokenizer final : public TokenizerRef {
public:
    std::string tokenizer_id() const override { return "whitespace-v1"; }

    size_t count(std::string_view text) const override { return split_words(text).size(); }

    std::string take(std::string_view text, size_t n) const override {
        auto words = split_words(text);
        if (words.size() <= n) return std::string(text);
        if (n == 0) return "";
        return join_words(words, 0, n - 1);
    }
};

// Counts Unicode codepoints; the sane fallback for scripts without spaces.
class CodepointTokenizer final : public TokenizerRef {
public:
    std::string tokenizer_id() const override { return "codepoint-v1"; }

    size_t count(std::string_view text) const override { return codepoint_count(text); }

    std::string take(std::string_view text, size_t n) const override {
        size_t seen = 0;
        size_t i = 0;
        while (i < text.size()) {
            if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
                if (seen == n) break;
                ++seen;
            }
            ++i;
        }
        return std::string(text.substr(0, i));
    }
};

inline std::shared_ptr<TokenizerRef> make_tokenizer(const std::string& id) {
    if (id == "whitespace-v1") return std::make_shared<WhitespaceTokenizer>();
    if (id == "codepoint-v1") return std::make_shared<CodepointTokenizer>();
    fail("ConfigError", "unknown tokenizer id '" + id + "'");
}

}  // namespace recap
