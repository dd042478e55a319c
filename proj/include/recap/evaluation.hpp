#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/errors.hpp"
#include "recap/ranking.hpp"
#include "recap/snippet.hpp"

namespace recap {

inline std::set<int> gold_set(const TargetInstance& instance) {
    if (!instance.labels) fail("SchemaViolation", "instance " + instance.target_uid + " has no labels");
    std::set<int> gold;
    for (size_t k = 0; k < instance.labels->size(); ++k)
        if ((*instance.labels)[k] == 1) gold.insert(static_cast<int>(k));
    return gold;
}

inline std::map<std::string, const RankedPrediction*> index_predictions(
    const std::vector<RankedPrediction>& preds) {
    std::map<std::string, const RankedPrediction*> out;
    for (const auto& p : preds) out[p.target_uid] = &p;
    return out;
}

// ---------------------------------------------------------------------------
// @5 metrics: macro over targets, F1 from the two averages, all x100
// ---------------------------------------------------------------------------

struct At5Metrics {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    int targets = 0;
};

inline double harmonic_f1(double recall, double precision) {
    if (recall + precision == 0.0) return 0.0;
    return 2.0 * recall * precision / (recall + precision);
}

inline At5Metrics at5_metrics(const std::vector<RankedPrediction>& preds,
                              const std::vector<TargetInstance>& instances) {
    const auto by_uid = index_predictions(preds);
    double recall_sum = 0.0, precision_sum = 0.0;
    int n = 0;
    for (const auto& inst : instances) {
        auto it = by_uid.find(inst.target_uid);
        if (it == by_uid.end()) fail("MissingPrediction", "no prediction for target " + inst.target_uid);
        const auto gold = gold_set(inst);
        const std::set<int> selected(it->second->selected.begin(), it->second->selected.end());
        int hits = 0;
        for (int s : selected)
            if (gold.count(s)) ++hits;
        recall_sum += static_cast<double>(hits) / static_cast<double>(gold.size());
        // admissible-set shortfalls legitimately select fewer than 5; the
        // denominator follows the actual selection size
        precision_sum += selected.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(selected.size());
        ++n;
    }
    At5Metrics m;
    m.targets = n;
    if (n == 0) return m;
    m.recall = 100.0 * recall_sum / n;
    m.precision = 100.0 * precision_sum / n;
    m.f1 = harmonic_f1(m.recall, m.precision);
    return m;
}

// ---------------------------------------------------------------------------
// Free-selection metrics: micro over all (target, candidate) decisions
// ---------------------------------------------------------------------------

struct FreeMetrics {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0;
    bool precision_undefined = false;  // nothing selected anywhere
};

// Pads are bookkeeping fillers for the @5 setting, not free-mode claims, so
// they are removed from the selection before counting.
inline FreeMetrics free_metrics(const std::vector<RankedPrediction>& preds,
                                const std::vector<TargetInstance>& instances) {
    const auto by_uid = index_predictions(preds);
    FreeMetrics m;
    for (const auto& inst : instances) {
        auto it = by_uid.find(inst.target_uid);
        if (it == by_uid.end()) fail("MissingPrediction", "no prediction for target " + inst.target_uid);
        const auto gold = gold_set(inst);
        std::set<int> selected;
        for (int s : it->second->selected)
            if (!it->second->pads.count(s)) selected.insert(s);
        for (int s : selected)
            gold.count(s) ? ++m.tp : ++m.fp;
        for (int g : gold)
            if (!selected.count(g)) ++m.fn;
    }
    m.recall = m.tp + m.fn == 0 ? 0.0 : 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.tp + m.fp == 0) {
        m.precision_undefined = true;
        m.precision = 0.0;
    } else {
        m.precision = 100.0 * static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    }
    m.f1 = harmonic_f1(m.recall, m.precision);
    return m;
}

inline std::vector<RankedPrediction> select_all_baseline(const std::vector<TargetInstance>& instances) {
    std::vector<RankedPrediction> out;
    for (const auto& inst : instances) {
        RankedPrediction pred;
        pred.target_uid = inst.target_uid;
        pred.policy = Policy::free_threshold;
        pred.scores.assign(inst.candidates.size(), 0.0);
        for (size_t k = 0; k < inst.candidates.size(); ++k) pred.selected.push_back(static_cast<int>(k));
        out.push_back(std::move(pred));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distance analyses
// ---------------------------------------------------------------------------

using BandScorer =
    std::function<RankedPrediction(const TargetInstance&, const std::set<int>& admissible)>;

// Re-run the scorer with candidates and gold restricted to the nearest
// `band` windows. Targets whose restricted gold set is empty drop out of
// that band's average (counted in dropped).
struct BandReport {
    int band = 0;
    At5Metrics at5;
    int dropped = 0;
};

inline std::vector<BandReport> distance_banded(const BandScorer& scorer,
                                               const std::vector<TargetInstance>& instances,
                                               const std::vector<int>& bands = {20, 40, 60}) {
    std::vector<BandReport> reports;
    for (int band : bands) {
        if (band <= 0 || band > kNumCandidates)
            fail("BandLargerThan60", "band " + std::to_string(band) + " outside (0, " +
                                         std::to_string(kNumCandidates) + "]");
        BandReport report;
        report.band = band;
        std::vector<TargetInstance> kept;
        std::vector<RankedPrediction> preds;
        for (const auto& inst : instances) {
            auto gold = gold_set(inst);
            bool any = false;
            for (int g : gold)
                if (g < band) any = true;
            if (!any) {
                ++report.dropped;
                continue;
            }
            TargetInstance restricted = inst;
            for (size_t k = static_cast<size_t>(band); k < restricted.labels->size(); ++k)
                (*restricted.labels)[k] = 0;
            std::set<int> admissible;
            for (int k = 0; k < band && k < static_cast<int>(inst.candidates.size()); ++k)
                admissible.insert(k);
            preds.push_back(scorer(restricted, admissible));
            kept.push_back(std::move(restricted));
        }
        if (!kept.empty()) report.at5 = at5_metrics(preds, kept);
        reports.push_back(std::move(report));
    }
    return reports;
}

// Proportions of gold recaps over candidate-distance thirds {0-19, 20-39, 40-59}.
inline std::array<double, 3> distance_histogram(const std::vector<TargetInstance>& instances) {
    std::array<long, 3> counts{0, 0, 0};
    long total = 0;
    for (const auto& inst : instances) {
        for (int g : gold_set(inst)) {
            ++counts[static_cast<size_t>(std::min(g / 20, 2))];
            ++total;
        }
    }
    std::array<double, 3> out{0.0, 0.0, 0.0};
    if (total == 0) return out;
    for (size_t i = 0; i < 3; ++i) out[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return out;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct SubsetReport {
    std::string subset;
    At5Metrics at5;
    FreeMetrics free;
    std::vector<BandReport> bands;
    std::array<double, 3> histogram{0.0, 0.0, 0.0};
    int targets = 0;
    long positives = 0;
};

struct EvalReport {
    std::vector<SubsetReport> subsets;
    std::string config_hash;
};

inline SubsetReport build_subset_report(const std::string& subset,
                                        const std::vector<RankedPrediction>& preds,
                                        const std::vector<TargetInstance>& instances,
                                        const BandScorer& band_scorer = nullptr,
                                        const std::vector<int>& bands = {20, 40, 60}) {
    SubsetReport report;
    report.subset = subset;
    report.at5 = at5_metrics(preds, instances);
    report.free = free_metrics(preds, instances);
    if (band_scorer) report.bands = distance_banded(band_scorer, instances, bands);
    report.histogram = distance_histogram(instances);
    report.targets = static_cast<int>(instances.size());
    for (const auto& inst : instances) report.positives += static_cast<long>(gold_set(inst).size());
    return report;
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json subsets = nlohmann::json::array();
    for (const auto& s : report.subsets) {
        nlohmann::json bands = nlohmann::json::array();
        for (const auto& b : s.bands)
            bands.push_back({{"band", b.band},
                             {"recall_at5", round2(b.at5.recall)},
                             {"precision_at5", round2(b.at5.precision)},
                             {"f1_at5", round2(b.at5.f1)},
                             {"dropped", b.dropped}});
        subsets.push_back({{"subset", s.subset},
                           {"recall_at5", round2(s.at5.recall)},
                           {"precision_at5", round2(s.at5.precision)},
                           {"f1_at5", round2(s.at5.f1)},
                           {"recall", round2(s.free.recall)},
                           {"precision", round2(s.free.precision)},
                           {"f1", round2(s.free.f1)},
                           {"precision_undefined", s.free.precision_undefined},
                           {"bands", bands},
                           {"histogram", s.histogram},
                           {"targets", s.targets},
                           {"positives", s.positives}});
    }
    return nlohmann::json{{"config_hash", report.config_hash}, {"subsets", subsets}};
}

// Plot data for external figure tooling: one histogram row and one band row
// per subset.
inline void write_report_csv(std::ostream& out, const EvalReport& report) {
    out << "subset,kind,x,value\n";
    for (const auto& s : report.subsets) {
        const char* range_names[3] = {"0-19", "20-39", "40-59"};
        for (size_t i = 0; i < 3; ++i)
            out << s.subset << ",histogram," << range_names[i] << ',' << s.histogram[i] << '\n';
        for (const auto& b : s.bands) out << s.subset << ",band_f1@5," << b.band << ',' << round2(b.at5.f1) << '\n';
    }
}

}  // namespace recap
