#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "recap/errors.hpp"
#include "recap/text.hpp"

namespace recap {

// Sentence segmentation and NER are injected backends; the corpus manifest
// records their version strings so a corpus can be rebuilt bit-identically.

class SegmenterBackend {
public:
    virtual ~SegmenterBackend() = default;
    virtual std::string version() const = 0;
    virtual std::vector<std::string> split(std::string_view text) const = 0;
};

// Splits on sentence-final punctuation (ASCII .!? and their CJK fullwidth
// forms), keeping the delimiter with the sentence.
class PunctSentenceSegmenter final : public SegmenterBackend {
public:
    std::string version() const override { return "punct-v1"; }

    std::vector<std::string> split(std::string_view text) const override {
        std::vector<std::string> out;
        std::string current;
        size_t i = 0;
        while (i < text.size()) {
            size_t adv = 1;
            bool boundary = false;
            char c = text[i];
            if (c == '.' || c == '!' || c == '?') {
                current.push_back(c);
                boundary = true;
            } else if (starts_with_cjk_stop(text.substr(i), adv)) {
                current.append(text.substr(i, adv));
                boundary = true;
            } else {
                current.push_back(c);
            }
            i += adv;
            if (boundary) {
                auto t = trim(current);
                if (!t.empty()) out.push_back(t);
                current.clear();
            }
        }
        auto t = trim(current);
        if (!t.empty()) out.push_back(t);
        return out;
    }

private:
    // 。！？ in UTF-8 (all three bytes long, starting 0xE3 0x80 0x82 etc.)
    static bool starts_with_cjk_stop(std::string_view s, size_t& adv) {
        static const char* stops[] = {"\xE3\x80\x82", "\xEF\xBC\x81", "\xEF\xBC\x9F"};
        for (const char* stop : stops) {
            if (s.substr(0, 3) == stop) {
                adv = 3;
                return true;
            }
        }
        return false;
    }
};

// One sentence per non-empty line. Handy for pre-segmented fixtures.
class LineSegmenter final : public SegmenterBackend {
public:
    std::string version() const override { return "line-v1"; }

    std::vector<std::string> split(std::string_view text) const override {
        std::vector<std::string> out;
        size_t start = 0;
        while (start <= text.size()) {
            size_t nl = text.find('\n', start);
            std::string_view line = nl == std::string_view::npos ? text.substr(start)
                                                                 : text.substr(start, nl - start);
            auto t = trim(line);
            if (!t.empty()) out.push_back(t);
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
        return out;
    }
};

class NerBackend {
public:
    virtual ~NerBackend() = default;
    virtual std::string version() const = 0;
    // Surface forms recognized in the text, in order of first appearance.
    virtual std::vector<std::string> names(std::string_view text) const = 0;
};

// Every capitalized word (letters only, length >= 2) is a candidate name.
// Crude, but deterministic and tool-free; alias tables do the real work.
class CapitalizedWordNer final : public NerBackend {
public:
    std::string version() const override { return "capitalized-v1"; }

    std::vector<std::string> names(std::string_view text) const override {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (auto& word : split_words(text)) {
            std::string stripped;
            for (char c : word)
                if (std::isalpha(static_cast<unsigned char>(c))) stripped.push_back(c);
            if (stripped.size() < 2) continue;
            if (!std::isupper(static_cast<unsigned char>(stripped[0]))) continue;
            if (seen.insert(stripped).second) out.push_back(stripped);
        }
        return out;
    }
};

// Matches a fixed lexicon of surface forms by substring scan; covers scripts
// without capitalization.
class LexiconNer final : public NerBackend {
public:
    explicit LexiconNer(std::set<std::string> lexicon) : lexicon_(std::move(lexicon)) {}

    std::string version() const override { return "lexicon-v1"; }

    std::vector<std::string> names(std::string_view text) const override {
        std::vector<std::string> out;
        for (const auto& name : lexicon_)
            if (contains(text, name)) out.push_back(name);
        return out;
    }

private:
    std::set<std::string> lexicon_;
};

}  // namespace recap
