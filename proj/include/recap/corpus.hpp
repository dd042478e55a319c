#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/errors.hpp"

namespace recap {

enum class Language { zh, en };

inline std::string to_string(Language lang) { return lang == Language::zh ? "zh" : "en"; }

inline Language language_from_string(const std::string& s) {
    if (s == "zh") return Language::zh;
    if (s == "en") return Language::en;
    fail("SchemaViolation", "unknown language tag '" + s + "'");
}

// canonical name -> set of surface forms (the canonical name itself always
// counts as a surface form, whether or not it is listed).
using AliasTable = std::map<std::string, std::set<std::string>>;

// Surface forms must be pairwise disjoint across canonical names, otherwise a
// mention would be ambiguous.
inline void validate_alias_table(const AliasTable& table) {
    std::map<std::string, std::string> seen;  // surface -> canonical
    for (const auto& [canonical, surfaces] : table) {
        for (const auto& s : surfaces) {
            auto [it, inserted] = seen.emplace(s, canonical);
            if (!inserted && it->second != canonical)
                fail("SchemaViolation", "surface form '" + s + "' claimed by both '" + it->second +
                                            "' and '" + canonical + "'");
        }
    }
}

// Resolve a surface form to its canonical name. Returns empty when the table
// is non-empty and the surface is unknown (exact-match policy).
inline std::string canonical_name(const AliasTable& table, const std::string& surface) {
    if (table.empty()) return surface;
    for (const auto& [canonical, surfaces] : table) {
        if (surface == canonical || surfaces.count(surface)) return canonical;
    }
    return "";
}

// All surface forms of a canonical name, including the name itself.
inline std::set<std::string> surface_forms(const AliasTable& table, const std::string& canonical) {
    std::set<std::string> out{canonical};
    auto it = table.find(canonical);
    if (it != table.end()) out.insert(it->second.begin(), it->second.end());
    return out;
}

struct SentenceRecord {
    int sentence_id = 0;                  // absolute 0-based index, contiguous
    std::string text;
    std::set<std::string> char_mentions;  // canonical names only
    int token_count = 0;                  // per the run's reference tokenizer

    bool operator==(const SentenceRecord&) const = default;
};

struct Corpus {
    std::string book_id;
    Language language = Language::en;
    std::vector<SentenceRecord> sentences;
    std::set<std::string> main_characters;
    AliasTable alias_table;

    // manifest
    std::string segmenter_version;
    std::string tokenizer_id;
    int main_character_min_count = 100;

    bool operator==(const Corpus&) const = default;

    size_t size() const { return sentences.size(); }

    const SentenceRecord& at(int sentence_id) const {
        if (sentence_id < 0 || static_cast<size_t>(sentence_id) >= sentences.size())
            fail("SpanOutOfRange", "sentence id " + std::to_string(sentence_id) + " outside corpus '" +
                                       book_id + "' of " + std::to_string(sentences.size()) + " sentences");
        return sentences[static_cast<size_t>(sentence_id)];
    }
};

// ---------------------------------------------------------------------------
// Serialization. Corpus files are JSONL ({id, text, chars[]} per sentence)
// with a sidecar manifest JSON; nlohmann keeps object keys sorted, so the
// byte stream is stable for identical corpora.
// ---------------------------------------------------------------------------

inline std::string corpus_to_jsonl(const Corpus& corpus) {
    std::ostringstream out;
    for (const auto& s : corpus.sentences) {
        nlohmann::json line{{"id", s.sentence_id},
                            {"text", s.text},
                            {"chars", s.char_mentions},
                            {"tokens", s.token_count}};
        out << line.dump() << '\n';
    }
    return out.str();
}

inline nlohmann::json corpus_manifest(const Corpus& corpus) {
    nlohmann::json aliases = nlohmann::json::object();
    for (const auto& [canonical, surfaces] : corpus.alias_table) aliases[canonical] = surfaces;
    return nlohmann::json{{"book_id", corpus.book_id},
                          {"language", to_string(corpus.language)},
                          {"segmenter_version", corpus.segmenter_version},
                          {"tokenizer_id", corpus.tokenizer_id},
                          {"main_character_min_count", corpus.main_character_min_count},
                          {"main_characters", corpus.main_characters},
                          {"alias_table", aliases}};
}

inline void write_corpus(const Corpus& corpus, const std::string& jsonl_path,
                         const std::string& manifest_path) {
    std::ofstream jf(jsonl_path);
    if (!jf) fail("IoError", "cannot write " + jsonl_path);
    jf << corpus_to_jsonl(corpus);
    std::ofstream mf(manifest_path);
    if (!mf) fail("IoError", "cannot write " + manifest_path);
    mf << corpus_manifest(corpus).dump(2) << '\n';
}

inline Corpus read_corpus(const std::string& jsonl_path, const std::string& manifest_path) {
    Corpus corpus;
    std::ifstream mf(manifest_path);
    if (!mf) fail("IoError", "cannot read " + manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    corpus.book_id = manifest.at("book_id").get<std::string>();
    corpus.language = language_from_string(manifest.at("language").get<std::string>());
    corpus.segmenter_version = manifest.at("segmenter_version").get<std::string>();
    corpus.tokenizer_id = manifest.at("tokenizer_id").get<std::string>();
    corpus.main_character_min_count = manifest.at("main_character_min_count").get<int>();
    if (manifest.contains("main_characters"))
        corpus.main_characters = manifest["main_characters"].get<std::set<std::string>>();
    if (manifest.contains("alias_table"))
        for (const auto& [canonical, surfaces] : manifest["alias_table"].items())
            corpus.alias_table[canonical] = surfaces.get<std::set<std::string>>();

    std::ifstream jf(jsonl_path);
    if (!jf) fail("IoError", "cannot read " + jsonl_path);
    std::string line;
    int expected_id = 0;
    while (std::getline(jf, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        SentenceRecord rec;
        rec.sentence_id = j.at("id").get<int>();
        rec.text = j.at("text").get<std::string>();
        rec.char_mentions = j.at("chars").get<std::set<std::string>>();
        rec.token_count = j.value("tokens", 0);
        if (rec.sentence_id != expected_id)
            fail("SchemaViolation", "non-contiguous sentence id " + std::to_string(rec.sentence_id) +
                                        " in " + jsonl_path);
        ++expected_id;
        corpus.sentences.push_back(std::move(rec));
    }
    return corpus;
}

}  // namespace recap
