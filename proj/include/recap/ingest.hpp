#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/corpus.hpp"
#include "recap/errors.hpp"
#include "recap/segmenter.hpp"
#include "recap/tokenizer.hpp"

namespace recap {

struct IngestOptions {
    AliasTable alias_table;                       // empty -> raw NER names become canonical
    std::shared_ptr<TokenizerRef> tokenizer;      // nullptr -> whitespace reference tokenizer
    int main_character_min_count = 100;           // a main character mentions strictly more sentences
};

// Load raw book text into a sentence-indexed corpus with character mentions.
// Mentions are counted per sentence; a name qualifies as a main character
// when the number of sentences mentioning it (under any alias) exceeds
// main_character_min_count.
inline Corpus ingest_book(const std::string& raw_text, const std::string& book_id, Language language,
                          const SegmenterBackend& segmenter, const NerBackend& ner,
                          const IngestOptions& options = {}) {
    if (trim(raw_text).empty()) fail("EmptyText", "book '" + book_id + "' has no text");
    validate_alias_table(options.alias_table);

    auto tokenizer = options.tokenizer ? options.tokenizer : std::make_shared<WhitespaceTokenizer>();

    Corpus corpus;
    corpus.book_id = book_id;
    corpus.language = language;
    corpus.alias_table = options.alias_table;
    corpus.segmenter_version = segmenter.version();
    corpus.tokenizer_id = tokenizer->tokenizer_id();
    corpus.main_character_min_count = options.main_character_min_count;

    std::vector<std::string> sentences;
    try {
        sentences = segmenter.split(raw_text);
    } catch (const std::exception& e) {
        fail("SegmenterFailure", std::string("segmenter '") + segmenter.version() + "' on book '" +
                                     book_id + "': " + e.what());
    }
    if (sentences.empty()) fail("EmptyText", "segmenter produced no sentences for '" + book_id + "'");

    std::map<std::string, int> mention_sentences;  // canonical -> #sentences mentioning it
    int id = 0;
    for (auto& text : sentences) {
        SentenceRecord rec;
        rec.sentence_id = id++;
        rec.token_count = static_cast<int>(tokenizer->count(text));
        std::vector<std::string> surfaces;
        try {
            surfaces = ner.names(text);
        } catch (const std::exception& e) {
            fail("SegmenterFailure", std::string("NER '") + ner.version() + "' failed at sentence " +
                                         std::to_string(rec.sentence_id) + ": " + e.what());
        }
        for (const auto& surface : surfaces) {
            auto canonical = canonical_name(options.alias_table, surface);
            if (!canonical.empty()) rec.char_mentions.insert(canonical);
        }
        for (const auto& name : rec.char_mentions) mention_sentences[name] += 1;
        rec.text = std::move(text);
        corpus.sentences.push_back(std::move(rec));
    }

    for (const auto& [name, count] : mention_sentences)
        if (count > options.main_character_min_count) corpus.main_characters.insert(name);
    return corpus;
}

// ---------------------------------------------------------------------------
// TV productions: episode synopses plus wiki event pages.
// ---------------------------------------------------------------------------

struct AnchoredParagraph {
    std::string text;
    std::string episode_anchor;

    bool operator==(const AnchoredParagraph&) const = default;
};

struct EventPage {
    std::string event_name;
    std::vector<AnchoredParagraph> prelude_paragraphs;
    std::vector<AnchoredParagraph> body_paragraphs;  // ordered

    bool operator==(const EventPage&) const = default;
};

struct Episode {
    std::string episode_id;
    std::vector<std::string> paragraphs;

    bool operator==(const Episode&) const = default;
};

struct SynopsisCorpus {
    std::string production_id;
    std::vector<Episode> episodes;  // air order
    std::vector<EventPage> events;

    bool operator==(const SynopsisCorpus&) const = default;

    // Global paragraph order: episode order, then in-episode order.
    size_t paragraph_count() const {
        size_t n = 0;
        for (const auto& ep : episodes) n += ep.paragraphs.size();
        return n;
    }

    std::vector<std::string> global_paragraphs() const {
        std::vector<std::string> out;
        for (const auto& ep : episodes)
            for (const auto& p : ep.paragraphs) out.push_back(p);
        return out;
    }

    // First global index of an episode's paragraphs; -1 when unknown.
    int episode_offset(const std::string& episode_id) const {
        int offset = 0;
        for (const auto& ep : episodes) {
            if (ep.episode_id == episode_id) return offset;
            offset += static_cast<int>(ep.paragraphs.size());
        }
        return -1;
    }

    const Episode* find_episode(const std::string& episode_id) const {
        for (const auto& ep : episodes)
            if (ep.episode_id == episode_id) return &ep;
        return nullptr;
    }
};

namespace detail {

inline AnchoredParagraph parse_anchored(const nlohmann::json& j, const std::string& where) {
    if (!j.contains("text") || !j.contains("episode"))
        fail("SchemaViolation", where + ": paragraph needs {text, episode}");
    return AnchoredParagraph{j.at("text").get<std::string>(), j.at("episode").get<std::string>()};
}

}  // namespace detail

// Parse a synopsis dump: JSONL records with kind "episode" or "event".
//   {"kind":"episode","episode_id":"s01e01","paragraphs":["...", ...]}
//   {"kind":"event","name":"...","prelude":[{"text":..,"episode":..}],
//    "body":[{"text":..,"episode":..}]}
// Episodes keep dump order (air order). Every anchor must name an episode
// present in the dump.
inline SynopsisCorpus parse_synopsis_dump(std::istream& in, const std::string& production_id) {
    SynopsisCorpus corpus;
    corpus.production_id = production_id;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail("SchemaViolation", "dump line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string kind = j.value("kind", "");
        if (kind == "episode") {
            if (!j.contains("episode_id") || !j.contains("paragraphs"))
                fail("SchemaViolation",
                     "dump line " + std::to_string(line_no) + ": episode needs {episode_id, paragraphs}");
            Episode ep;
            ep.episode_id = j.at("episode_id").get<std::string>();
            ep.paragraphs = j.at("paragraphs").get<std::vector<std::string>>();
            corpus.episodes.push_back(std::move(ep));
        } else if (kind == "event") {
            if (!j.contains("name"))
                fail("SchemaViolation", "dump line " + std::to_string(line_no) + ": event needs {name}");
            EventPage ev;
            ev.event_name = j.at("name").get<std::string>();
            for (const auto& p : j.value("prelude", nlohmann::json::array()))
                ev.prelude_paragraphs.push_back(detail::parse_anchored(p, "event '" + ev.event_name + "'"));
            for (const auto& p : j.value("body", nlohmann::json::array()))
                ev.body_paragraphs.push_back(detail::parse_anchored(p, "event '" + ev.event_name + "'"));
            corpus.events.push_back(std::move(ev));
        } else {
            fail("SchemaViolation",
                 "dump line " + std::to_string(line_no) + ": kind must be 'episode' or 'event'");
        }
    }

    std::set<std::string> episode_ids;
    for (const auto& ep : corpus.episodes) episode_ids.insert(ep.episode_id);
    for (const auto& ev : corpus.events) {
        auto check = [&](const AnchoredParagraph& p) {
            if (!episode_ids.count(p.episode_anchor))
                fail("UnknownEpisodeAnchor",
                     "event '" + ev.event_name + "' anchors to missing episode '" + p.episode_anchor + "'");
        };
        for (const auto& p : ev.prelude_paragraphs) check(p);
        for (const auto& p : ev.body_paragraphs) check(p);
    }
    return corpus;
}

inline SynopsisCorpus ingest_synopses(const std::string& dump_path, const std::string& production_id) {
    std::ifstream in(dump_path);
    if (!in) fail("IoError", "cannot read " + dump_path);
    return parse_synopsis_dump(in, production_id);
}

}  // namespace recap
