#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/backends.hpp"
#include "recap/corpus.hpp"
#include "recap/errors.hpp"
#include "recap/numeric.hpp"
#include "recap/segmenter.hpp"
#include "recap/snippet.hpp"

namespace recap {

enum class Policy { top5, free_threshold, closest5 };

inline std::string to_string(Policy p) {
    switch (p) {
        case Policy::top5: return "top5";
        case Policy::free_threshold: return "free_threshold";
        case Policy::closest5: return "closest5";
    }
    fail("SchemaViolation", "bad policy value");
}

inline Policy policy_from_string(const std::string& s) {
    if (s == "top5") return Policy::top5;
    if (s == "free_threshold") return Policy::free_threshold;
    if (s == "closest5") return Policy::closest5;
    fail("SchemaViolation", "unknown policy '" + s + "'");
}

struct RankedPrediction {
    std::string target_uid;
    std::vector<double> scores;  // one per candidate; higher = more recap-like
    std::vector<int> selected;   // ordered by (score desc, cand_index asc)
    Policy policy = Policy::top5;
    std::vector<std::string> flags;
    std::set<int> pads;  // filler selections, excluded from free-mode scoring

    bool has_flag(const std::string& f) const {
        return std::find(flags.begin(), flags.end(), f) != flags.end();
    }
};

inline constexpr double kInadmissible = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Char-Filter
// ---------------------------------------------------------------------------

struct CharFilterResult {
    std::set<int> admissible;
    bool fallback_all = false;     // filter could not act; every candidate admitted
    std::vector<std::string> target_names;
};

// Admit candidates that mention at least one character recognized in the
// target, matching any alias of that character. Targets with no recognized
// names, and filters that would empty the candidate set, fall back to
// admitting everything (flagged) so downstream selection never starves.
inline CharFilterResult char_filter(const TargetInstance& instance, const NerBackend& ner,
                                    const AliasTable& alias_table) {
    CharFilterResult result;
    result.target_names = ner.names(instance.target.text);
    if (result.target_names.empty()) {
        for (const auto& cand : instance.candidates) result.admissible.insert(*cand.cand_index);
        result.fallback_all = true;
        return result;
    }

    std::set<std::string> surfaces;
    for (const auto& name : result.target_names) {
        const std::string canon = canonical_name(alias_table, name);
        for (const auto& s : surface_forms(alias_table, canon.empty() ? name : canon)) surfaces.insert(s);
    }

    for (const auto& cand : instance.candidates) {
        for (const auto& surface : surfaces) {
            if (contains(cand.text, surface)) {
                result.admissible.insert(*cand.cand_index);
                break;
            }
        }
    }
    if (result.admissible.empty()) {
        for (const auto& cand : instance.candidates) result.admissible.insert(*cand.cand_index);
        result.fallback_all = true;
    }
    return result;
}

inline std::set<int> all_admissible(const TargetInstance& instance) {
    std::set<int> out;
    for (const auto& cand : instance.candidates) out.insert(*cand.cand_index);
    return out;
}

// ---------------------------------------------------------------------------
// Selection policies
// ---------------------------------------------------------------------------

// Order candidate indices by (score desc, index asc), skipping -inf entries.
inline std::vector<int> score_order(const std::vector<double>& scores) {
    std::vector<int> order;
    order.reserve(scores.size());
    for (size_t k = 0; k < scores.size(); ++k)
        if (scores[k] != kInadmissible) order.push_back(static_cast<int>(k));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    return order;
}

inline std::vector<int> select(const std::vector<double>& scores, Policy policy,
                               std::optional<double> threshold = std::nullopt) {
    if (policy == Policy::closest5) {
        std::vector<int> out;
        for (size_t k = 0; k < scores.size() && out.size() < 5; ++k)
            if (scores[k] != kInadmissible) out.push_back(static_cast<int>(k));
        return out;
    }
    auto order = score_order(scores);
    if (policy == Policy::top5) {
        if (order.size() > 5) order.resize(5);
        return order;
    }
    if (!threshold) fail("SchemaViolation", "free_threshold policy requires a threshold");
    std::vector<int> out;
    for (int k : order)
        if (scores[static_cast<size_t>(k)] >= *threshold) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// Rankers
// ---------------------------------------------------------------------------

struct RankOptions {
    Policy policy = Policy::top5;
    std::optional<double> threshold;
    bool event_prefix = true;  // prepend "Event: {name}\n" to TV targets
    bool filter_fallback = false;  // carried through from char_filter
};

inline std::string target_encode_text(const TargetInstance& instance, bool event_prefix) {
    if (event_prefix && instance.event_name) return "Event: " + *instance.event_name + "\n" + instance.target.text;
    return instance.target.text;
}

// Cosine similarity between the target embedding and each admissible
// candidate embedding; inadmissible candidates score -inf.
inline RankedPrediction rank_by_embedding(const TargetInstance& instance, const EmbeddingBackend& backend,
                                          const std::set<int>& admissible, RankOptions options = {}) {
    if (admissible.empty()) fail("SchemaViolation", "rank_by_embedding needs a non-empty admissible set");

    std::vector<std::string> texts;
    texts.push_back(target_encode_text(instance, options.event_prefix));
    for (const auto& cand : instance.candidates) texts.push_back(cand.text);
    const Mat embeddings = backend.encode(texts);

    RankedPrediction pred;
    pred.target_uid = instance.target_uid;
    pred.policy = options.policy;
    pred.scores.assign(instance.candidates.size(), kInadmissible);
    for (size_t k = 0; k < instance.candidates.size(); ++k) {
        const int idx = *instance.candidates[k].cand_index;
        if (admissible.count(idx)) pred.scores[k] = cosine(embeddings.front(), embeddings[k + 1]);
    }
    pred.selected = select(pred.scores, options.policy, options.threshold);
    if (options.filter_fallback) pred.flags.push_back("filter_fallback");
    if (options.event_prefix && instance.event_name) pred.flags.push_back("event_prefix");
    return pred;
}

// Distance baseline: score = -cand_index, nearest k selected.
inline RankedPrediction closest_k(const TargetInstance& instance, int k = 5) {
    if (k > static_cast<int>(instance.candidates.size()))
        fail("SchemaViolation", "closest_k k exceeds candidate count");
    RankedPrediction pred;
    pred.target_uid = instance.target_uid;
    pred.policy = Policy::closest5;
    pred.scores.resize(instance.candidates.size());
    for (size_t i = 0; i < pred.scores.size(); ++i) pred.scores[i] = -static_cast<double>(i);
    for (int i = 0; i < k; ++i) pred.selected.push_back(i);
    return pred;
}

// ---------------------------------------------------------------------------
// Prediction file I/O
// ---------------------------------------------------------------------------

inline nlohmann::json prediction_to_json(const RankedPrediction& pred) {
    nlohmann::json scores = nlohmann::json::array();
    for (double s : pred.scores)
        scores.push_back(s == kInadmissible ? nlohmann::json() : nlohmann::json(s));
    nlohmann::json j{{"target_uid", pred.target_uid},
                     {"policy", to_string(pred.policy)},
                     {"scores", scores},
                     {"selected", pred.selected},
                     {"flags", pred.flags}};
    if (!pred.pads.empty()) j["pads"] = pred.pads;
    return j;
}

inline RankedPrediction prediction_from_json(const nlohmann::json& j) {
    RankedPrediction pred;
    pred.target_uid = j.at("target_uid").get<std::string>();
    pred.policy = policy_from_string(j.at("policy").get<std::string>());
    for (const auto& s : j.at("scores"))
        pred.scores.push_back(s.is_null() ? kInadmissible : s.get<double>());
    pred.selected = j.at("selected").get<std::vector<int>>();
    if (j.contains("flags")) pred.flags = j.at("flags").get<std::vector<std::string>>();
    if (j.contains("pads")) {
        auto pads = j.at("pads").get<std::vector<int>>();
        pred.pads.insert(pads.begin(), pads.end());
    }
    return pred;
}

inline void write_predictions(std::ostream& out, const std::vector<RankedPrediction>& preds) {
    for (const auto& p : preds) out << prediction_to_json(p).dump() << '\n';
}

inline std::vector<RankedPrediction> read_predictions(std::istream& in) {
    std::vector<RankedPrediction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace recap
