#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/corpus.hpp"
#include "recap/errors.hpp"
#include "recap/ingest.hpp"
#include "recap/rng.hpp"

namespace recap {

// Window algebra constants. Every target gets exactly 60 history windows; the
// last history sentence (the "gap" sentence j) is sampled 10..20 sentences
// before the central sentence to break surface coherence with the target.
inline constexpr int kNumCandidates = 60;
inline constexpr int kGapMin = 10;
inline constexpr int kGapMax = 20;

enum class SnippetKind { target, candidate };

struct Snippet {
    std::string book_id;
    int start = 0;  // inclusive sentence ids
    int end = 0;
    std::string text;
    SnippetKind kind = SnippetKind::target;
    std::optional<int> central_id;  // targets only
    std::optional<int> cand_index;  // candidates only, 0 = nearest

    int length() const { return end - start + 1; }

    bool operator==(const Snippet&) const = default;
};

struct TargetInstance {
    std::string target_uid;
    Snippet target;
    std::vector<Snippet> candidates;  // cand_index 0..59, nearest first
    int gap_j = 0;
    std::optional<std::vector<int>> labels;  // 60 binary values when present
    std::optional<std::string> event_name;
    std::optional<std::string> chapter_context;

    bool operator==(const TargetInstance&) const = default;

    int gold_count() const {
        if (!labels) return 0;
        int n = 0;
        for (int y : *labels) n += y;
        return n;
    }
};

// Target span covers floor(w/2) sentences before the central one; when w is
// even the extra sentence goes before (recap context precedes the target).
inline std::pair<int, int> target_span(int central_id, int w) {
    const int before = w / 2;
    const int after = w - 1 - before;
    return {central_id - before, central_id + after};
}

// Candidate k covers [j - (k+1)*w_c + 1, j - k*w_c]: w_c-sentence chunks laid
// back-to-front from the gap sentence j.
inline std::pair<int, int> candidate_span(int gap_j, int k, int w_c) {
    return {gap_j - (k + 1) * w_c + 1, gap_j - k * w_c};
}

namespace detail {

inline std::string span_text(const Corpus& corpus, int start, int end) {
    std::string out;
    for (int i = start; i <= end; ++i) {
        if (!out.empty()) out += ' ';
        out += corpus.at(i).text;
    }
    return out;
}

}  // namespace detail

struct CentralSelection {
    std::vector<int> ids;
    bool budget_exceeds_supply = false;  // fewer candidates than requested
};

// Pick central sentences for targets: sentences mentioning a main character,
// thinned greedily so the implied w-sentence windows never overlap (greedy
// earliest-end is maximal for interval scheduling), then stratified-sampled:
// the book is cut into sample_budget equal sentence ranges and one survivor
// is drawn per non-empty stratum.
inline CentralSelection select_central_sentences(const Corpus& corpus, int w, int sample_budget,
                                                 uint64_t seed) {
    if (w < 1) fail("SpanOutOfRange", "w must be >= 1");
    if (corpus.main_characters.empty())
        fail("NoMainCharacters", "corpus '" + corpus.book_id + "' has no main characters");

    std::vector<int> kept;
    int last_end = -1;
    for (const auto& sentence : corpus.sentences) {
        bool has_main = std::any_of(sentence.char_mentions.begin(), sentence.char_mentions.end(),
                                    [&](const std::string& n) { return corpus.main_characters.count(n); });
        if (!has_main) continue;
        auto [start, end] = target_span(sentence.sentence_id, w);
        if (start <= last_end) continue;  // would overlap the previous window
        kept.push_back(sentence.sentence_id);
        last_end = end;
    }

    CentralSelection result;
    if (sample_budget <= 0 || kept.empty()) {
        result.budget_exceeds_supply = kept.empty();
        return result;
    }
    if (static_cast<size_t>(sample_budget) >= kept.size()) {
        result.ids = kept;
        result.budget_exceeds_supply = true;
        return result;
    }

    const int n = static_cast<int>(corpus.size());
    size_t cursor = 0;
    for (int stratum = 0; stratum < sample_budget; ++stratum) {
        // equal sentence ranges [lo, hi)
        const int lo = static_cast<int>(static_cast<int64_t>(stratum) * n / sample_budget);
        const int hi = static_cast<int>(static_cast<int64_t>(stratum + 1) * n / sample_budget);
        std::vector<int> in_stratum;
        while (cursor < kept.size() && kept[cursor] < hi) {
            if (kept[cursor] >= lo) in_stratum.push_back(kept[cursor]);
            ++cursor;
        }
        if (in_stratum.empty()) continue;
        Rng rng(substream_seed(seed, {"central", corpus.book_id, std::to_string(stratum)}));
        result.ids.push_back(
            in_stratum[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(in_stratum.size()) - 1))]);
    }
    return result;
}

inline std::string book_target_uid(const std::string& book_id, int central_id) {
    return book_id + ":" + std::to_string(central_id);
}

// Deterministic gap sample for one instance: uniform over [i-20, i-10] from a
// substream keyed by (book_id, central_id, run seed).
inline int sample_gap(const std::string& book_id, int central_id, uint64_t seed) {
    Rng rng(substream_seed(seed, {"gap", book_id, std::to_string(central_id)}));
    return static_cast<int>(rng.uniform_int(central_id - kGapMax, central_id - kGapMin));
}

// Core constructor with an explicit gap sentence; the public op samples it.
inline TargetInstance build_target_instance_at(const Corpus& corpus, int central_id, int w, int w_c,
                                               int gap_j) {
    if (w < 1 || w_c < 1) fail("SpanOutOfRange", "w and w_c must be >= 1");
    if (gap_j < central_id - kGapMax || gap_j > central_id - kGapMin)
        fail("SpanOutOfRange", "gap sentence " + std::to_string(gap_j) + " outside [i-20, i-10] for i=" +
                                   std::to_string(central_id));
    if (central_id - kGapMax - kNumCandidates * w_c + 1 < 0)
        fail("InsufficientHistory", "central sentence " + std::to_string(central_id) +
                                        " lacks 60 candidate windows of length " + std::to_string(w_c));
    if (central_id + w / 2 >= static_cast<int>(corpus.size()))
        fail("SpanOutOfRange", "target window around sentence " + std::to_string(central_id) +
                                   " runs past the end of '" + corpus.book_id + "'");

    TargetInstance instance;
    instance.target_uid = book_target_uid(corpus.book_id, central_id);
    instance.gap_j = gap_j;

    auto [tstart, tend] = target_span(central_id, w);
    instance.target = Snippet{corpus.book_id, tstart, tend, detail::span_text(corpus, tstart, tend),
                              SnippetKind::target, central_id, std::nullopt};

    instance.candidates.reserve(kNumCandidates);
    for (int k = 0; k < kNumCandidates; ++k) {
        auto [cstart, cend] = candidate_span(gap_j, k, w_c);
        instance.candidates.push_back(Snippet{corpus.book_id, cstart, cend,
                                              detail::span_text(corpus, cstart, cend),
                                              SnippetKind::candidate, std::nullopt, k});
    }
    return instance;
}

inline TargetInstance build_target_instance(const Corpus& corpus, int central_id, int w, int w_c,
                                            uint64_t seed) {
    return build_target_instance_at(corpus, central_id, w, w_c,
                                    sample_gap(corpus.book_id, central_id, seed));
}

// ---------------------------------------------------------------------------
// TV instances: synopsis paragraphs are the snippets; every body-mapped
// episode paragraph becomes a target whose candidates are the 60 preceding
// global paragraphs.
// ---------------------------------------------------------------------------

struct TvInstanceBuild {
    std::vector<TargetInstance> instances;
    int dropped_insufficient_history = 0;
};

struct TvTargetRef {
    std::string event_name;
    int global_index = 0;  // episode paragraph mapped from the event body
};

inline std::string tv_target_uid(const std::string& production_id, const std::string& event_name,
                                 int global_index) {
    return production_id + ":" + event_name + ":" + std::to_string(global_index);
}

// `targets` normally comes from labeling::align_events (the body-mapped
// paragraphs, one entry per event they appear in).
inline TvInstanceBuild build_tv_instances(const SynopsisCorpus& synopsis,
                                          const std::vector<TvTargetRef>& targets) {
    const auto paragraphs = synopsis.global_paragraphs();
    TvInstanceBuild out;
    for (const auto& ref : targets) {
        if (ref.global_index < 0 || static_cast<size_t>(ref.global_index) >= paragraphs.size())
            fail("SpanOutOfRange", "global paragraph " + std::to_string(ref.global_index) +
                                       " outside production '" + synopsis.production_id + "'");
        if (ref.global_index < kNumCandidates) {
            ++out.dropped_insufficient_history;
            continue;
        }
        TargetInstance instance;
        instance.target_uid = tv_target_uid(synopsis.production_id, ref.event_name, ref.global_index);
        instance.event_name = ref.event_name;
        instance.gap_j = ref.global_index - 1;
        instance.target =
            Snippet{synopsis.production_id, ref.global_index, ref.global_index,
                    paragraphs[static_cast<size_t>(ref.global_index)], SnippetKind::target,
                    ref.global_index, std::nullopt};
        for (int k = 0; k < kNumCandidates; ++k) {
            const int g = ref.global_index - 1 - k;
            instance.candidates.push_back(Snippet{synopsis.production_id, g, g,
                                                  paragraphs[static_cast<size_t>(g)],
                                                  SnippetKind::candidate, std::nullopt, k});
        }
        out.instances.push_back(std::move(instance));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Instance JSONL
// ---------------------------------------------------------------------------

inline nlohmann::json instance_to_json(const TargetInstance& instance) {
    nlohmann::json j;
    j["uid"] = instance.target_uid;
    j["target"] = {{"span", {instance.target.start, instance.target.end}},
                   {"central_id", instance.target.central_id.value_or(instance.target.start)},
                   {"text", instance.target.text}};
    j["gap_j"] = instance.gap_j;
    auto cands = nlohmann::json::array();
    for (const auto& c : instance.candidates)
        cands.push_back({{"k", *c.cand_index}, {"span", {c.start, c.end}}, {"text", c.text}});
    j["candidates"] = std::move(cands);
    if (instance.labels) j["labels"] = *instance.labels;
    if (instance.event_name) j["event_name"] = *instance.event_name;
    if (instance.chapter_context) j["chapter_context"] = *instance.chapter_context;
    return j;
}

inline TargetInstance instance_from_json(const nlohmann::json& j, const std::string& book_id) {
    TargetInstance instance;
    instance.target_uid = j.at("uid").get<std::string>();
    const auto& t = j.at("target");
    instance.target.book_id = book_id;
    instance.target.start = t.at("span")[0].get<int>();
    instance.target.end = t.at("span")[1].get<int>();
    instance.target.central_id = t.at("central_id").get<int>();
    instance.target.text = t.at("text").get<std::string>();
    instance.target.kind = SnippetKind::target;
    instance.gap_j = j.at("gap_j").get<int>();
    for (const auto& c : j.at("candidates")) {
        Snippet s;
        s.book_id = book_id;
        s.kind = SnippetKind::candidate;
        s.cand_index = c.at("k").get<int>();
        s.start = c.at("span")[0].get<int>();
        s.end = c.at("span")[1].get<int>();
        s.text = c.at("text").get<std::string>();
        instance.candidates.push_back(std::move(s));
    }
    if (j.contains("labels")) instance.labels = j["labels"].get<std::vector<int>>();
    if (j.contains("event_name")) instance.event_name = j["event_name"].get<std::string>();
    if (j.contains("chapter_context")) instance.chapter_context = j["chapter_context"].get<std::string>();
    return instance;
}

inline void write_instances(const std::vector<TargetInstance>& instances, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("IoError", "cannot write " + path);
    for (const auto& instance : instances) out << instance_to_json(instance).dump() << '\n';
}

inline std::vector<TargetInstance> read_instances(const std::string& path, const std::string& book_id) {
    std::ifstream in(path);
    if (!in) fail("IoError", "cannot read " + path);
    std::vector<TargetInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(instance_from_json(nlohmann::json::parse(line), book_id));
    }
    return out;
}

}  // namespace recap
