#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/backends.hpp"
#include "recap/errors.hpp"
#include "recap/ingest.hpp"
#include "recap/numeric.hpp"
#include "recap/snippet.hpp"

namespace recap {

// ---------------------------------------------------------------------------
// Human annotations -> binary labels
// ---------------------------------------------------------------------------

enum class Choice { DefinitelyIs, PresumablyIs, IsNot };

inline Choice choice_from_string(const std::string& s) {
    if (s == "DefinitelyIs") return Choice::DefinitelyIs;
    if (s == "PresumablyIs") return Choice::PresumablyIs;
    if (s == "IsNot") return Choice::IsNot;
    fail("SchemaViolation", "unknown annotation choice '" + s + "'");
}

inline std::string to_string(Choice c) {
    switch (c) {
        case Choice::DefinitelyIs: return "DefinitelyIs";
        case Choice::PresumablyIs: return "PresumablyIs";
        case Choice::IsNot: return "IsNot";
    }
    fail("SchemaViolation", "bad choice value");
}

// The two graded "is a recap" choices both collapse to YES.
inline bool choice_is_yes(Choice c) { return c != Choice::IsNot; }

struct AnnotationRecord {
    std::string target_uid;
    int cand_index = 0;
    std::string annotator_id;
    Choice choice = Choice::IsNot;
};

inline std::vector<AnnotationRecord> read_annotations_jsonl(std::istream& in) {
    std::vector<AnnotationRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail("SchemaViolation", "annotation line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const char* key : {"target_uid", "cand_index", "annotator_id", "choice"})
            if (!j.contains(key))
                fail("SchemaViolation",
                     "annotation line " + std::to_string(lineno) + " missing field '" + key + "'");
        out.push_back(AnnotationRecord{j.at("target_uid").get<std::string>(),
                                       j.at("cand_index").get<int>(),
                                       j.at("annotator_id").get<std::string>(),
                                       choice_from_string(j.at("choice").get<std::string>())});
    }
    return out;
}

// Header row: target_uid,cand_index,annotator_id,choice
inline std::vector<AnnotationRecord> read_annotations_csv(std::istream& in) {
    std::vector<AnnotationRecord> out;
    std::string line;
    bool first = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (first) {
            first = false;
            if (cells.size() == 4 && cells[0] == "target_uid") continue;  // header
        }
        if (cells.size() != 4)
            fail("SchemaViolation", "annotation csv line " + std::to_string(lineno) + ": expected 4 cells, got " +
                                        std::to_string(cells.size()));
        out.push_back(AnnotationRecord{cells[0], std::stoi(cells[1]), cells[2], choice_from_string(cells[3])});
    }
    return out;
}

// Fleiss' kappa for `counts` rows of per-category rating counts; every row
// must sum to the same rater count n. When the raters only ever use a single
// category the chance-agreement term degenerates (denominator 0) and
// agreement is perfect by construction, so kappa is reported as 1.
inline double fleiss_kappa(const std::vector<std::vector<int>>& counts) {
    if (counts.empty()) fail("SchemaViolation", "fleiss_kappa needs at least one item");
    const size_t categories = counts.front().size();
    int n = 0;
    for (int c : counts.front()) n += c;
    if (n < 2) fail("SchemaViolation", "fleiss_kappa needs at least two raters per item");

    double p_bar = 0.0;
    std::vector<double> p_j(categories, 0.0);
    for (const auto& row : counts) {
        if (row.size() != categories) fail("SchemaViolation", "ragged fleiss_kappa count rows");
        int row_sum = 0;
        double sq = 0.0;
        for (size_t j = 0; j < categories; ++j) {
            row_sum += row[j];
            sq += static_cast<double>(row[j]) * row[j];
            p_j[j] += row[j];
        }
        if (row_sum != n) fail("SchemaViolation", "fleiss_kappa rows must all have the same rater count");
        p_bar += (sq - n) / (static_cast<double>(n) * (n - 1));
    }
    p_bar /= static_cast<double>(counts.size());

    double p_e = 0.0;
    for (double& pj : p_j) {
        pj /= static_cast<double>(counts.size()) * n;
        p_e += pj * pj;
    }
    // Single-category degeneracy: chance agreement is 1, so the ratio is
    // 0/0. Observed perfect agreement scores 1; anything else takes the
    // defined limit 0.
    if (1.0 - p_e < 1e-12) return p_bar >= 1.0 - 1e-12 ? 1.0 : 0.0;
    return (p_bar - p_e) / (1.0 - p_e);
}

struct AggregationResult {
    // target_uid -> 60 majority-vote labels, for targets that kept >= 1 positive
    std::map<std::string, std::vector<int>> labels;
    std::vector<std::string> dropped_all_zero;  // targets with no positive candidate
    double kappa = 0.0;                          // binary YES/NO agreement over all items
    int annotator_count = 0;
};

// Majority vote over a complete 3-way annotation pass. Every (target,
// candidate) pair must be rated exactly once by each annotator; anything
// missing or doubled is an IncompleteCoverage error naming the offender.
inline AggregationResult aggregate_annotations(const std::vector<AnnotationRecord>& records,
                                               int candidates_per_target = kNumCandidates) {
    if (records.empty()) fail("IncompleteCoverage", "no annotation records");

    std::set<std::string> annotators;
    std::set<std::string> targets;
    for (const auto& r : records) {
        annotators.insert(r.annotator_id);
        targets.insert(r.target_uid);
        if (r.cand_index < 0 || r.cand_index >= candidates_per_target)
            fail("SchemaViolation", "candidate index " + std::to_string(r.cand_index) + " out of range for " +
                                        r.target_uid);
    }
    const int n_annotators = static_cast<int>(annotators.size());

    // (target, cand, annotator) -> choice, guarding against duplicates
    std::map<std::string, std::vector<std::map<std::string, Choice>>> votes;
    for (const auto& t : targets)
        votes[t].assign(static_cast<size_t>(candidates_per_target), {});
    for (const auto& r : records) {
        auto& cell = votes[r.target_uid][static_cast<size_t>(r.cand_index)];
        if (!cell.emplace(r.annotator_id, r.choice).second)
            fail("IncompleteCoverage", "duplicate rating by " + r.annotator_id + " on " + r.target_uid +
                                           " candidate " + std::to_string(r.cand_index));
    }

    AggregationResult result;
    result.annotator_count = n_annotators;
    std::vector<std::vector<int>> kappa_counts;
    kappa_counts.reserve(targets.size() * static_cast<size_t>(candidates_per_target));

    for (const auto& t : targets) {
        std::vector<int> labels(static_cast<size_t>(candidates_per_target), 0);
        bool any_positive = false;
        for (int k = 0; k < candidates_per_target; ++k) {
            const auto& cell = votes[t][static_cast<size_t>(k)];
            if (static_cast<int>(cell.size()) != n_annotators)
                fail("IncompleteCoverage", "target " + t + " candidate " + std::to_string(k) + " has " +
                                               std::to_string(cell.size()) + " of " +
                                               std::to_string(n_annotators) + " ratings");
            int yes = 0;
            for (const auto& [_, choice] : cell)
                if (choice_is_yes(choice)) ++yes;
            kappa_counts.push_back({yes, n_annotators - yes});
            if (2 * yes > n_annotators) {
                labels[static_cast<size_t>(k)] = 1;
                any_positive = true;
            }
        }
        if (any_positive)
            result.labels.emplace(t, std::move(labels));
        else
            result.dropped_all_zero.push_back(t);
    }

    result.kappa = fleiss_kappa(kappa_counts);
    return result;
}

// Attach aggregated labels to their instances; instances whose target was
// dropped (no positive candidate) are filtered out.
inline std::vector<TargetInstance> apply_labels(std::vector<TargetInstance> instances,
                                                const AggregationResult& agg) {
    std::vector<TargetInstance> out;
    for (auto& inst : instances) {
        auto it = agg.labels.find(inst.target_uid);
        if (it == agg.labels.end()) continue;
        inst.labels = it->second;
        out.push_back(std::move(inst));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synopsis event alignment -> automatic TV labels
// ---------------------------------------------------------------------------

struct ParagraphMapping {
    bool is_prelude = false;  // prelude paragraph vs body paragraph
    int position = 0;         // index within the event's prelude or body list
    std::string episode_anchor;
    std::vector<int> global_indices;  // mapped episode paragraphs, global numbering
};

struct EventAlignment {
    std::string event_name;
    std::vector<ParagraphMapping> mappings;
};

// Top-of-ranking selection for one event paragraph against its anchored
// episode: take three episode paragraphs when the three best are one
// unbroken run AND the two best are adjacent, two when just the two best are
// adjacent, otherwise only the best. Ties in similarity break toward the
// earlier paragraph.
inline std::vector<int> select_aligned_paragraphs(const Vec& similarities) {
    const size_t n = similarities.size();
    if (n == 0) fail("EmptyEpisode", "cannot align against an episode with no paragraphs");
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return similarities[static_cast<size_t>(a)] > similarities[static_cast<size_t>(b)]; });

    if (n >= 3) {
        std::vector<int> top3{order[0], order[1], order[2]};
        std::vector<int> sorted3 = top3;
        std::sort(sorted3.begin(), sorted3.end());
        const bool run_of_three = sorted3[1] == sorted3[0] + 1 && sorted3[2] == sorted3[1] + 1;
        if (run_of_three && std::abs(order[0] - order[1]) == 1) return top3;
    }
    if (n >= 2 && std::abs(order[0] - order[1]) == 1) return {order[0], order[1]};
    return {order[0]};
}

// Map every prelude/body paragraph of every event onto paragraphs of its
// anchored episode, by embedding similarity.
inline std::vector<EventAlignment> align_events(const SynopsisCorpus& synopsis,
                                                const EmbeddingBackend& backend) {
    std::vector<EventAlignment> out;
    out.reserve(synopsis.events.size());

    // one encode per episode, reused across events anchored to it
    std::map<std::string, Mat> episode_embeddings;
    auto episode_matrix = [&](const std::string& anchor) -> const Mat& {
        auto it = episode_embeddings.find(anchor);
        if (it != episode_embeddings.end()) return it->second;
        const Episode* ep = synopsis.find_episode(anchor);
        if (!ep) fail("UnknownEpisodeAnchor", "no episode '" + anchor + "' in this production");
        if (ep->paragraphs.empty()) fail("EmptyEpisode", "episode '" + anchor + "' has no paragraphs");
        return episode_embeddings.emplace(anchor, backend.encode(ep->paragraphs)).first->second;
    };

    for (const auto& event : synopsis.events) {
        EventAlignment alignment;
        alignment.event_name = event.event_name;

        auto align_one = [&](const AnchoredParagraph& para, bool is_prelude, int position) {
            const Mat& ep_mat = episode_matrix(para.episode_anchor);
            const Mat para_mat = backend.encode({para.text});
            Vec sims(ep_mat.size());
            for (size_t i = 0; i < ep_mat.size(); ++i) sims[i] = cosine(para_mat.front(), ep_mat[i]);
            ParagraphMapping mapping;
            mapping.is_prelude = is_prelude;
            mapping.position = position;
            mapping.episode_anchor = para.episode_anchor;
            const int offset = synopsis.episode_offset(para.episode_anchor);
            for (int local : select_aligned_paragraphs(sims))
                mapping.global_indices.push_back(offset + local);
            std::sort(mapping.global_indices.begin(), mapping.global_indices.end());
            alignment.mappings.push_back(std::move(mapping));
        };

        for (size_t p = 0; p < event.prelude_paragraphs.size(); ++p)
            align_one(event.prelude_paragraphs[p], true, static_cast<int>(p));
        for (size_t b = 0; b < event.body_paragraphs.size(); ++b)
            align_one(event.body_paragraphs[b], false, static_cast<int>(b));

        out.push_back(std::move(alignment));
    }
    return out;
}

// Convenience for building TV targets: every body-mapped paragraph becomes
// one target ref per (event, mapped paragraph) pair.
inline std::vector<TvTargetRef> body_mapped_targets(const std::vector<EventAlignment>& alignments) {
    std::vector<TvTargetRef> out;
    for (const auto& alignment : alignments) {
        std::set<int> seen;
        for (const auto& m : alignment.mappings) {
            if (m.is_prelude) continue;
            for (int g : m.global_indices)
                if (seen.insert(g).second) out.push_back(TvTargetRef{alignment.event_name, g});
        }
    }
    return out;
}

// Per-event-paragraph mapping quality: share of event paragraphs that were
// mapped at all (on desk-scale fixtures this is 1.0 by construction).
struct AlignmentReport {
    int event_paragraphs = 0;
    int mapped = 0;
    double mapping_rate = 0.0;
};

inline AlignmentReport alignment_report(const std::vector<EventAlignment>& alignments) {
    AlignmentReport report;
    for (const auto& a : alignments) {
        for (const auto& m : a.mappings) {
            ++report.event_paragraphs;
            if (!m.global_indices.empty()) ++report.mapped;
        }
    }
    report.mapping_rate = report.event_paragraphs == 0
                              ? 0.0
                              : static_cast<double>(report.mapped) / report.event_paragraphs;
    return report;
}

inline const EventAlignment& find_alignment(const std::vector<EventAlignment>& alignments,
                                            const std::string& event_name) {
    for (const auto& a : alignments)
        if (a.event_name == event_name) return a;
    fail("TargetNotInAlignment", "no alignment for event '" + event_name + "'");
}

// Derive automatic labels for one TV instance. A candidate paragraph is a
// recap of the target when the same event reaches it through a prelude
// paragraph or through a body paragraph that comes strictly before the body
// paragraph the target itself was mapped from (earliest such body position
// when the target paragraph is reached from several).
inline std::vector<int> derive_tv_labels(const TargetInstance& instance,
                                         const std::vector<EventAlignment>& alignments) {
    if (!instance.event_name)
        fail("TargetNotInAlignment", "instance " + instance.target_uid + " carries no event name");
    const EventAlignment& alignment = find_alignment(alignments, *instance.event_name);

    const int target_global = instance.target.start;  // TV targets are single paragraphs
    std::optional<int> target_body_position;
    for (const auto& m : alignment.mappings) {
        if (m.is_prelude) continue;
        if (std::find(m.global_indices.begin(), m.global_indices.end(), target_global) == m.global_indices.end())
            continue;
        if (!target_body_position || m.position < *target_body_position) target_body_position = m.position;
    }
    if (!target_body_position)
        fail("TargetNotInAlignment", "target paragraph " + std::to_string(target_global) +
                                         " is not mapped from any body paragraph of event '" +
                                         *instance.event_name + "'");

    std::set<int> positive_paragraphs;
    for (const auto& m : alignment.mappings) {
        const bool counts = m.is_prelude || m.position < *target_body_position;
        if (!counts) continue;
        positive_paragraphs.insert(m.global_indices.begin(), m.global_indices.end());
    }

    std::vector<int> labels(instance.candidates.size(), 0);
    for (size_t k = 0; k < instance.candidates.size(); ++k)
        if (positive_paragraphs.count(instance.candidates[k].start)) labels[k] = 1;
    return labels;
}

// Label a whole TV instance set in place; instances that end up with no
// positive candidate are dropped, mirroring the human-label path.
struct TvLabelResult {
    std::vector<TargetInstance> instances;
    std::vector<std::string> dropped_all_zero;
};

inline TvLabelResult label_tv_instances(std::vector<TargetInstance> instances,
                                        const std::vector<EventAlignment>& alignments) {
    TvLabelResult result;
    for (auto& inst : instances) {
        auto labels = derive_tv_labels(inst, alignments);
        if (std::find(labels.begin(), labels.end(), 1) == labels.end()) {
            result.dropped_all_zero.push_back(inst.target_uid);
            continue;
        }
        inst.labels = std::move(labels);
        result.instances.push_back(std::move(inst));
    }
    return result;
}

}  // namespace recap
