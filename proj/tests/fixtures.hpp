#pragma once

// Shared synthetic fixtures: deterministic corpora, synopsis dumps, note
// corpora, and planted-recap benchmarks used by unit and acceptance tests.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/corpus.hpp"
#include "recap/rng.hpp"
#include "recap/snippet.hpp"

namespace fixtures {

// A corpus of `n` one-word-per-id sentences ("s0." .. "s{n-1}.") where the
// main character "Zed" is mentioned in every sentence, so any id can become a
// central sentence.
inline recap::Corpus dense_corpus(int n, const std::string& book_id = "book") {
    recap::Corpus corpus;
    corpus.book_id = book_id;
    corpus.language = recap::Language::en;
    corpus.main_characters = {"Zed"};
    corpus.alias_table = {{"Zed", {"Zed"}}};
    for (int i = 0; i < n; ++i) {
        recap::SentenceRecord rec;
        rec.sentence_id = i;
        rec.text = "Zed s" + std::to_string(i) + ".";
        rec.char_mentions = {"Zed"};
        rec.token_count = 2;
        corpus.sentences.push_back(std::move(rec));
    }
    return corpus;
}

// Corpus where "Zed" appears only at the given sentence ids.
inline recap::Corpus sparse_corpus(int n, const std::set<int>& zed_ids,
                                   const std::string& book_id = "book") {
    recap::Corpus corpus;
    corpus.book_id = book_id;
    corpus.language = recap::Language::en;
    corpus.main_characters = {"Zed"};
    corpus.alias_table = {{"Zed", {"Zed"}}};
    for (int i = 0; i < n; ++i) {
        recap::SentenceRecord rec;
        rec.sentence_id = i;
        rec.text = zed_ids.count(i) ? "Zed s" + std::to_string(i) + "." : "s" + std::to_string(i) + ".";
        if (zed_ids.count(i)) rec.char_mentions = {"Zed"};
        rec.token_count = zed_ids.count(i) ? 2 : 1;
        corpus.sentences.push_back(std::move(rec));
    }
    return corpus;
}

// Raw book text of `n` sentences; "Zed" is planted in the first `zed` of
// them and "Quo" in the first `quo`.
inline std::string raw_book(int n, int zed, int quo) {
    std::string text;
    for (int i = 0; i < n; ++i) {
        std::string s = "sentence number " + std::to_string(i);
        if (i < zed) s += " mentions Zed";
        if (i < quo) s += " and Quo";
        text += s + ". ";
    }
    return text;
}

// Instance with hand-set candidate texts; candidate k covers sentence ids
// [60-k-? ...] — ids are synthetic, only cand_index matters for these tests.
inline recap::TargetInstance bare_instance(const std::string& uid, const std::string& target_text,
                                           const std::vector<std::string>& cand_texts) {
    recap::TargetInstance inst;
    inst.target_uid = uid;
    inst.gap_j = 100;
    inst.target = recap::Snippet{"book", 110, 112, target_text, recap::SnippetKind::target, 111,
                                 std::nullopt};
    for (int k = 0; k < recap::kNumCandidates; ++k) {
        const std::string text =
            k < static_cast<int>(cand_texts.size()) ? cand_texts[static_cast<size_t>(k)]
                                                    : "filler text " + std::to_string(k);
        inst.candidates.push_back(recap::Snippet{"book", 100 - k, 100 - k, text,
                                                 recap::SnippetKind::candidate, std::nullopt, k});
    }
    return inst;
}

// Planted-recap benchmark: per target, `gold_per_third` positives are planted
// into each third of the distance range {0-19, 20-39, 40-59} and the positive
// candidates share a keyword with the target.
struct PlantedBenchmark {
    std::vector<recap::TargetInstance> instances;
};

inline PlantedBenchmark planted_benchmark(int targets, const std::array<int, 3>& gold_per_third,
                                          uint64_t seed) {
    PlantedBenchmark bench;
    for (int t = 0; t < targets; ++t) {
        recap::Rng rng(recap::substream_seed(seed, {"planted", std::to_string(t)}));
        const std::string keyword = "plotkey" + std::to_string(t);
        std::set<int> gold;
        for (int third = 0; third < 3; ++third) {
            std::set<int> in_third;
            while (static_cast<int>(in_third.size()) < gold_per_third[static_cast<size_t>(third)])
                in_third.insert(static_cast<int>(rng.uniform_int(third * 20, third * 20 + 19)));
            gold.insert(in_third.begin(), in_third.end());
        }
        std::vector<std::string> cand_texts(recap::kNumCandidates);
        for (int k = 0; k < recap::kNumCandidates; ++k) {
            cand_texts[static_cast<size_t>(k)] =
                gold.count(k) ? "earlier scene with " + keyword + " unfolding"
                              : "unrelated filler passage number " + std::to_string(1000 * t + k);
        }
        auto inst = bare_instance("planted:" + std::to_string(t),
                                  "the plot turns on " + keyword + " at last", cand_texts);
        std::vector<int> labels(recap::kNumCandidates, 0);
        for (int g : gold) labels[static_cast<size_t>(g)] = 1;
        inst.labels = labels;
        bench.instances.push_back(std::move(inst));
    }
    return bench;
}

// Synopsis dump JSONL with `episodes` episodes of `paragraphs_each`
// paragraphs and one event per episode-pair whose body paragraphs are exact
// copies of episode paragraphs (so alignment is identity).
inline std::string write_synopsis_dump(const std::filesystem::path& path, int episodes,
                                       int paragraphs_each, int events) {
    std::ofstream out(path);
    for (int e = 0; e < episodes; ++e) {
        nlohmann::json j{{"kind", "episode"}, {"episode_id", "ep" + std::to_string(e)}};
        auto paras = nlohmann::json::array();
        for (int p = 0; p < paragraphs_each; ++p)
            paras.push_back("episode " + std::to_string(e) + " scene " + std::to_string(p) +
                            " unique marker e" + std::to_string(e) + "p" + std::to_string(p));
        j["paragraphs"] = paras;
        out << j.dump() << '\n';
    }
    for (int v = 0; v < events; ++v) {
        nlohmann::json j{{"kind", "event"}, {"name", "event" + std::to_string(v)}};
        auto body = nlohmann::json::array();
        // body paragraphs copy one paragraph from successive episodes
        for (int e = 0; e < episodes; ++e) {
            const int p = v % paragraphs_each;
            body.push_back({{"text", "episode " + std::to_string(e) + " scene " + std::to_string(p) +
                                         " unique marker e" + std::to_string(e) + "p" + std::to_string(p)},
                            {"episode", "ep" + std::to_string(e)}});
        }
        j["body"] = body;
        j["prelude"] = nlohmann::json::array();
        out << j.dump() << '\n';
    }
    return path.string();
}

// Scripted-response rules file for the offline model client.
inline std::string write_scripted_rules(const std::filesystem::path& path,
                                        const std::string& default_response) {
    nlohmann::json j{{"default", default_response}, {"rules", nlohmann::json::array()}};
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    return path.string();
}

// Temp directory unique to a test, cleaned lazily by the OS.
inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("recap_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
