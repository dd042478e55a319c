#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "recap/evaluation.hpp"
#include "recap/ranking.hpp"

#include "fixtures.hpp"

using namespace recap;

namespace {

TargetInstance gold_instance(const std::string& uid, const std::set<int>& gold) {
    std::vector<std::string> cands;
    for (int k = 0; k < 60; ++k) cands.push_back("candidate passage " + std::to_string(k));
    auto inst = fixtures::bare_instance(uid, "target text", cands);
    std::vector<int> labels(60, 0);
    for (int g : gold) labels[static_cast<size_t>(g)] = 1;
    inst.labels = labels;
    return inst;
}

RankedPrediction pick(const std::string& uid, const std::vector<int>& selected,
                      const std::set<int>& pads = {}) {
    RankedPrediction pred;
    pred.target_uid = uid;
    pred.scores.assign(60, 0.0);
    pred.selected = selected;
    pred.pads = pads;
    return pred;
}

}  // namespace

TEST_CASE("harmonic F1 reproduces reference pairs", "[evaluation]") {
    REQUIRE(harmonic_f1(33.36, 67.49) == Catch::Approx(44.66).margin(0.05));
    REQUIRE(harmonic_f1(43.65, 54.00) == Catch::Approx(48.28).margin(0.02));
    REQUIRE(harmonic_f1(0.0, 0.0) == 0.0);
    REQUIRE(harmonic_f1(100.0, 100.0) == 100.0);
}

TEST_CASE("harmonic F1 sits between its arguments", "[evaluation]") {
    std::mt19937 gen(3);
    for (int i = 0; i < 200; ++i) {
        const double r = static_cast<double>(gen() % 10000) / 100.0;
        const double p = static_cast<double>(gen() % 10000) / 100.0;
        const double f = harmonic_f1(r, p);
        REQUIRE(f >= std::min(r, p) - 1e-9);
        REQUIRE(f <= std::max(r, p) + 1e-9);
        REQUIRE(f == harmonic_f1(p, r));  // symmetric
    }
}

TEST_CASE("top-5 metrics average per-target recall and precision", "[evaluation]") {
    auto inst = gold_instance("t:1", {1, 2, 3});
    auto pred = pick("t:1", {1, 2, 40, 41, 42});
    auto m = at5_metrics({pred}, {inst});
    REQUIRE(m.targets == 1);
    REQUIRE(m.recall == Catch::Approx(100.0 * 2.0 / 3.0).margin(1e-9));
    REQUIRE(m.precision == Catch::Approx(100.0 * 2.0 / 5.0).margin(1e-9));
    REQUIRE(m.f1 == Catch::Approx(harmonic_f1(m.recall, m.precision)).margin(1e-12));
}

TEST_CASE("macro averaging weights every target equally", "[evaluation]") {
    // perfect target + complete miss -> 50/50 regardless of gold sizes
    auto a = gold_instance("t:1", {0});
    auto b = gold_instance("t:2", {10, 11, 12, 13, 14});
    auto m = at5_metrics({pick("t:1", {0, 1, 2, 3, 4}), pick("t:2", {50, 51, 52, 53, 54})},
                         {a, b});
    REQUIRE(m.recall == Catch::Approx((100.0 + 0.0) / 2.0).margin(1e-9));
    REQUIRE(m.precision == Catch::Approx((20.0 + 0.0) / 2.0).margin(1e-9));
}

TEST_CASE("a missing prediction is an error, not a zero", "[evaluation]") {
    auto inst = gold_instance("t:1", {1});
    try {
        at5_metrics({pick("t:other", {1})}, {inst});
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "MissingPrediction");
    }
    REQUIRE_THROWS_AS(free_metrics({pick("t:other", {1})}, {inst}), Error);
}

TEST_CASE("free metrics count micro decisions", "[evaluation]") {
    auto a = gold_instance("t:1", {1, 2});
    auto b = gold_instance("t:2", {5});
    // t:1 selects {1, 9}: tp=1 fp=1 fn=1; t:2 selects {5}: tp=1
    auto m = free_metrics({pick("t:1", {1, 9}), pick("t:2", {5})}, {a, b});
    REQUIRE(m.tp == 2);
    REQUIRE(m.fp == 1);
    REQUIRE(m.fn == 1);
    REQUIRE(m.recall == Catch::Approx(100.0 * 2.0 / 3.0).margin(1e-9));
    REQUIRE(m.precision == Catch::Approx(100.0 * 2.0 / 3.0).margin(1e-9));
    REQUIRE_FALSE(m.precision_undefined);
}

TEST_CASE("pads never count as free-mode claims", "[evaluation]") {
    auto inst = gold_instance("t:1", {1});
    // the pads {30, 31} were appended only to fill the top-5 slate
    auto padded = pick("t:1", {1, 30, 31}, {30, 31});
    auto m = free_metrics({padded}, {inst});
    REQUIRE(m.tp == 1);
    REQUIRE(m.fp == 0);
    REQUIRE(m.fn == 0);
    REQUIRE(m.precision == 100.0);

    // the same pads do count for the @5 slate
    auto at5 = at5_metrics({padded}, {inst});
    REQUIRE(at5.precision == Catch::Approx(100.0 / 3.0).margin(1e-9));
}

TEST_CASE("empty selections zero the precision without dividing by zero", "[evaluation]") {
    auto inst = gold_instance("t:1", {1});
    auto m5 = at5_metrics({pick("t:1", {})}, {inst});
    REQUIRE(m5.recall == 0.0);
    REQUIRE(m5.precision == 0.0);
    REQUIRE(m5.f1 == 0.0);

    auto mf = free_metrics({pick("t:1", {})}, {inst});
    REQUIRE(mf.tp == 0);
    REQUIRE(mf.fn == 1);
    REQUIRE(mf.precision_undefined);
    REQUIRE(mf.precision == 0.0);
    REQUIRE(mf.f1 == 0.0);
}

TEST_CASE("duplicate selections collapse to set semantics", "[evaluation]") {
    auto inst = gold_instance("t:1", {7});
    auto m = at5_metrics({pick("t:1", {7, 7, 3})}, {inst});
    REQUIRE(m.precision == Catch::Approx(100.0 / 2.0).margin(1e-9));  // {7, 3}
    auto f = free_metrics({pick("t:1", {7, 7, 3})}, {inst});
    REQUIRE(f.tp == 1);
    REQUIRE(f.fp == 1);
}

TEST_CASE("selecting everything recovers all gold and obeys the F1 identity", "[evaluation]") {
    std::vector<TargetInstance> instances;
    long positives = 0;
    std::mt19937 gen(7);
    for (int t = 0; t < 20; ++t) {
        std::set<int> gold;
        const int n = 1 + static_cast<int>(gen() % 6);
        while (static_cast<int>(gold.size()) < n) gold.insert(static_cast<int>(gen() % 60));
        positives += n;
        instances.push_back(gold_instance("t:" + std::to_string(t), gold));
    }
    auto preds = select_all_baseline(instances);
    auto m = free_metrics(preds, instances);
    REQUIRE(m.recall == 100.0);
    REQUIRE(m.fn == 0);
    const double p = 100.0 * static_cast<double>(positives) / (60.0 * 20.0);
    REQUIRE(m.precision == Catch::Approx(p).margin(1e-9));
    REQUIRE(m.f1 == Catch::Approx(2.0 * p / (1.0 + p / 100.0)).margin(1e-9));
}

TEST_CASE("metrics are invariant to evaluation order", "[evaluation]") {
    std::vector<TargetInstance> instances;
    std::vector<RankedPrediction> preds;
    std::mt19937 gen(11);
    for (int t = 0; t < 12; ++t) {
        std::set<int> gold{static_cast<int>(gen() % 60), static_cast<int>(gen() % 60)};
        instances.push_back(gold_instance("t:" + std::to_string(t), gold));
        std::vector<int> sel;
        for (int i = 0; i < 5; ++i) sel.push_back(static_cast<int>(gen() % 60));
        preds.push_back(pick("t:" + std::to_string(t), sel));
    }
    auto base5 = at5_metrics(preds, instances);
    auto basef = free_metrics(preds, instances);

    std::vector<TargetInstance> shuffled_inst = instances;
    std::vector<RankedPrediction> shuffled_preds = preds;
    std::shuffle(shuffled_inst.begin(), shuffled_inst.end(), gen);
    std::shuffle(shuffled_preds.begin(), shuffled_preds.end(), gen);
    auto again5 = at5_metrics(shuffled_preds, shuffled_inst);
    auto againf = free_metrics(shuffled_preds, shuffled_inst);
    REQUIRE(base5.recall == Catch::Approx(again5.recall).margin(1e-12));
    REQUIRE(base5.precision == Catch::Approx(again5.precision).margin(1e-12));
    REQUIRE(basef.tp == againf.tp);
    REQUIRE(basef.fp == againf.fp);
    REQUIRE(basef.fn == againf.fn);
}

TEST_CASE("distance bands restrict candidates and gold to the nearest windows", "[evaluation]") {
    std::vector<TargetInstance> instances{
        gold_instance("t:1", {3, 50}),
        gold_instance("t:2", {45}),
    };
    BandScorer scorer = [](const TargetInstance& inst, const std::set<int>&) {
        return closest_k(inst, 5);
    };
    auto reports = distance_banded(scorer, instances, {20, 40, 60});
    REQUIRE(reports.size() == 3);
    REQUIRE(reports[0].band == 20);

    // band 20: t:2 has no gold inside and drops out; t:1 keeps gold {3}
    REQUIRE(reports[0].dropped == 1);
    REQUIRE(reports[0].at5.targets == 1);
    REQUIRE(reports[0].at5.recall == 100.0);  // closest-5 hits index 3

    // band 60 keeps everything
    REQUIRE(reports[2].dropped == 0);
    REQUIRE(reports[2].at5.targets == 2);

    // near-planted gold makes the tight band at least as easy to recall
    REQUIRE(reports[0].at5.recall >= reports[2].at5.recall);
}

TEST_CASE("the full-width band is bit-identical to unrestricted scoring", "[evaluation]") {
    std::vector<TargetInstance> instances;
    std::mt19937 gen(13);
    for (int t = 0; t < 10; ++t) {
        std::set<int> gold{static_cast<int>(gen() % 60)};
        gold.insert(static_cast<int>(gen() % 60));
        instances.push_back(gold_instance("t:" + std::to_string(t), gold));
    }
    BandScorer scorer = [](const TargetInstance& inst, const std::set<int>&) {
        return closest_k(inst, 5);
    };
    auto reports = distance_banded(scorer, instances, {60});

    std::vector<RankedPrediction> direct;
    for (const auto& inst : instances) direct.push_back(closest_k(inst, 5));
    auto unrestricted = at5_metrics(direct, instances);
    REQUIRE(reports[0].at5.recall == unrestricted.recall);
    REQUIRE(reports[0].at5.precision == unrestricted.precision);
    REQUIRE(reports[0].at5.f1 == unrestricted.f1);
    REQUIRE(reports[0].dropped == 0);
}

TEST_CASE("bands outside the candidate range are rejected", "[evaluation]") {
    BandScorer scorer = [](const TargetInstance& inst, const std::set<int>&) {
        return closest_k(inst, 5);
    };
    std::vector<TargetInstance> instances{gold_instance("t:1", {3})};
    try {
        distance_banded(scorer, instances, {61});
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "BandLargerThan60");
    }
    REQUIRE_THROWS_AS(distance_banded(scorer, instances, {0}), Error);
}

TEST_CASE("the distance histogram buckets gold into thirds", "[evaluation]") {
    REQUIRE(distance_histogram({gold_instance("t:1", {5})}) == std::array<double, 3>{1.0, 0.0, 0.0});
    auto spread = distance_histogram({gold_instance("t:1", {5, 25, 45})});
    REQUIRE(spread[0] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    REQUIRE(spread[1] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    REQUIRE(spread[2] == Catch::Approx(1.0 / 3.0).margin(1e-12));

    // aggregates across instances: {0, 19} near + {59} far
    auto multi = distance_histogram({gold_instance("t:1", {0, 19}), gold_instance("t:2", {59})});
    REQUIRE(multi[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    REQUIRE(multi[2] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    REQUIRE(multi[0] + multi[1] + multi[2] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("subset reports assemble every analysis", "[evaluation]") {
    std::vector<TargetInstance> instances{gold_instance("t:1", {2, 30}), gold_instance("t:2", {0})};
    std::vector<RankedPrediction> preds{pick("t:1", {2, 3, 4, 5, 6}), pick("t:2", {0, 1, 2, 3, 4})};

    auto without_bands = build_subset_report("bk", preds, instances);
    REQUIRE(without_bands.subset == "bk");
    REQUIRE(without_bands.targets == 2);
    REQUIRE(without_bands.positives == 3);
    REQUIRE(without_bands.bands.empty());
    REQUIRE(without_bands.at5.targets == 2);
    REQUIRE(without_bands.histogram[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));

    BandScorer scorer = [](const TargetInstance& inst, const std::set<int>&) {
        return closest_k(inst, 5);
    };
    auto with_bands = build_subset_report("bk", preds, instances, scorer);
    REQUIRE(with_bands.bands.size() == 3);
    REQUIRE(with_bands.bands[0].band == 20);
    REQUIRE(with_bands.bands[2].band == 60);
}

TEST_CASE("reports serialize to two-decimal JSON and plot-ready CSV", "[evaluation]") {
    REQUIRE(round2(17.16793) == 17.17);
    REQUIRE(round2(44.654999) == 44.65);

    SubsetReport s;
    s.subset = "bk";
    s.at5 = At5Metrics{33.333333, 66.666666, 44.444444, 10};
    s.histogram = {0.5, 0.25, 0.25};
    s.bands.push_back(BandReport{20, At5Metrics{50.0, 25.0, 33.333333, 9}, 1});
    EvalReport report;
    report.subsets.push_back(s);
    report.config_hash = "cafe";

    auto j = report_to_json(report);
    REQUIRE(j.at("config_hash") == "cafe");
    REQUIRE(j.at("subsets")[0].at("recall_at5") == 33.33);
    REQUIRE(j.at("subsets")[0].at("f1_at5") == 44.44);
    REQUIRE(j.at("subsets")[0].at("bands")[0].at("band") == 20);
    REQUIRE(j.at("subsets")[0].at("bands")[0].at("dropped") == 1);

    std::stringstream csv;
    write_report_csv(csv, report);
    std::string line;
    std::getline(csv, line);
    REQUIRE(line == "subset,kind,x,value");
    std::getline(csv, line);
    REQUIRE(line == "bk,histogram,0-19,0.5");
    std::getline(csv, line);
    REQUIRE(line == "bk,histogram,20-39,0.25");
    std::getline(csv, line);
    REQUIRE(line == "bk,histogram,40-59,0.25");
    std::getline(csv, line);
    REQUIRE(line == "bk,band_f1@5,20,33.33");
}
