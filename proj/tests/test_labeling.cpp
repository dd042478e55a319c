#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <sstream>

#include "recap/backends.hpp"
#include "recap/labeling.hpp"
#include "recap/snippet.hpp"

#include "fixtures.hpp"

using namespace recap;

namespace {

// Complete 3-annotator coverage for `targets` targets where candidate 0 gets
// the given vote pattern and all other candidates are unanimous IsNot.
std::vector<AnnotationRecord> records_with_cand0(const std::vector<std::array<Choice, 3>>& cand0_votes) {
    std::vector<AnnotationRecord> out;
    for (size_t t = 0; t < cand0_votes.size(); ++t) {
        const std::string uid = "b:" + std::to_string(t);
        for (int k = 0; k < kNumCandidates; ++k) {
            for (int a = 0; a < 3; ++a) {
                Choice c = k == 0 ? cand0_votes[t][static_cast<size_t>(a)] : Choice::IsNot;
                out.push_back({uid, k, "annotator" + std::to_string(a), c});
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("majority vote over YES/NO mapping", "[labeling]") {
    SECTION("(DefinitelyIs, PresumablyIs, IsNot) -> 1") {
        auto agg = aggregate_annotations(
            records_with_cand0({{Choice::DefinitelyIs, Choice::PresumablyIs, Choice::IsNot}}));
        REQUIRE(agg.labels.at("b:0")[0] == 1);
    }
    SECTION("(IsNot, IsNot, PresumablyIs) -> 0, target dropped as all-zero") {
        auto agg = aggregate_annotations(
            records_with_cand0({{Choice::IsNot, Choice::IsNot, Choice::PresumablyIs}}));
        REQUIRE(agg.labels.count("b:0") == 0);
        REQUIRE(agg.dropped_all_zero == std::vector<std::string>{"b:0"});
    }
}

TEST_CASE("incomplete coverage is rejected with the missing pairs", "[labeling]") {
    auto records = records_with_cand0({{Choice::DefinitelyIs, Choice::DefinitelyIs, Choice::IsNot}});
    records.pop_back();  // drop one vote
    try {
        aggregate_annotations(records);
        FAIL("expected IncompleteCoverage");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "IncompleteCoverage");
    }
}

TEST_CASE("aggregation is permutation-invariant in annotator order", "[labeling]") {
    auto records = records_with_cand0({{Choice::DefinitelyIs, Choice::PresumablyIs, Choice::IsNot},
                                       {Choice::IsNot, Choice::DefinitelyIs, Choice::DefinitelyIs}});
    auto base = aggregate_annotations(records);
    std::mt19937 gen(7);
    for (int round = 0; round < 5; ++round) {
        std::shuffle(records.begin(), records.end(), gen);
        auto shuffled = aggregate_annotations(records);
        REQUIRE(shuffled.labels == base.labels);
        REQUIRE(shuffled.kappa == base.kappa);
    }
}

TEST_CASE("fleiss kappa hand cases", "[labeling]") {
    SECTION("unanimous items with both categories present -> 1.0") {
        // item 1: 3 yes; item 2: 3 no
        std::vector<std::vector<int>> counts{{0, 3}, {3, 0}};
        REQUIRE(fleiss_kappa(counts) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("votes (Y,Y,N) and (N,N,Y) -> exactly -1/3") {
        std::vector<std::vector<int>> counts{{1, 2}, {2, 1}};
        REQUIRE(fleiss_kappa(counts) == Catch::Approx(-1.0 / 3.0).margin(1e-12));
    }
    SECTION("degenerate one-category distribution") {
        // all votes in one category: expected agreement 1; observed perfect -> 1.0
        std::vector<std::vector<int>> all_no{{3, 0}, {3, 0}};
        REQUIRE(fleiss_kappa(all_no) == 1.0);
    }
}

TEST_CASE("fleiss kappa is invariant under item and rater permutations", "[labeling]") {
    std::mt19937 gen(13);
    for (int round = 0; round < 100; ++round) {
        std::vector<std::vector<int>> counts;
        const int items = 2 + static_cast<int>(gen() % 8);
        for (int i = 0; i < items; ++i) {
            int yes = static_cast<int>(gen() % 4);
            counts.push_back({3 - yes, yes});
        }
        const double base = fleiss_kappa(counts);
        std::shuffle(counts.begin(), counts.end(), gen);
        REQUIRE(fleiss_kappa(counts) == Catch::Approx(base).margin(1e-12));
        // swapping category columns (relabeling YES<->NO) also preserves kappa
        auto swapped = counts;
        for (auto& row : swapped) std::swap(row[0], row[1]);
        REQUIRE(fleiss_kappa(swapped) == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("annotation files parse from JSONL and CSV", "[labeling]") {
    std::istringstream jsonl(
        R"({"target_uid":"b:1","cand_index":2,"annotator_id":"a1","choice":"DefinitelyIs"})"
        "\n"
        R"({"target_uid":"b:1","cand_index":2,"annotator_id":"a2","choice":"IsNot"})"
        "\n");
    auto from_jsonl = read_annotations_jsonl(jsonl);
    REQUIRE(from_jsonl.size() == 2);
    REQUIRE(from_jsonl[0].choice == Choice::DefinitelyIs);

    std::istringstream csv(
        "target_uid,cand_index,annotator_id,choice\n"
        "b:1,2,a1,DefinitelyIs\n"
        "b:1,2,a2,IsNot\n");
    auto from_csv = read_annotations_csv(csv);
    REQUIRE(from_csv.size() == 2);
    REQUIRE(from_csv[0].target_uid == from_jsonl[0].target_uid);
    REQUIRE(from_csv[1].choice == Choice::IsNot);
}

TEST_CASE("consecutive-top-k rule on all 6 orderings of {7,8,9}", "[labeling]") {
    // similarity vector over 12 paragraphs; positions 7, 8, 9 carry the top-3
    // scores in the given rank order
    // callers sort the mapped indices, so compare the selection as a sorted set
    auto run = [](int first, int second, int third) {
        Vec sims(12, 0.1);
        sims[static_cast<size_t>(first)] = 0.9;
        sims[static_cast<size_t>(second)] = 0.8;
        sims[static_cast<size_t>(third)] = 0.7;
        auto picked = select_aligned_paragraphs(sims);
        std::sort(picked.begin(), picked.end());
        return picked;
    };
    using V = std::vector<int>;
    REQUIRE(run(7, 8, 9) == V{7, 8, 9});
    REQUIRE(run(8, 9, 7) == V{7, 8, 9});
    REQUIRE(run(9, 8, 7) == V{7, 8, 9});
    REQUIRE(run(8, 7, 9) == V{7, 8, 9});
    REQUIRE(run(7, 9, 8) == V{7});  // top-2 not consecutive
    REQUIRE(run(9, 7, 8) == V{9});  // top-2 not consecutive
}

TEST_CASE("alignment of copied paragraphs is the identity mapping", "[labeling]") {
    auto dir = fixtures::temp_dir("align_identity");
    auto path = fixtures::write_synopsis_dump(dir / "dump.jsonl", 3, 4, 2);
    auto synopsis = ingest_synopses(path, "show");
    HashedBowEncoder backend(128);
    auto alignments = align_events(synopsis, backend);
    REQUIRE(alignments.size() == 2);

    // oracle: brute-force cosine of each event paragraph against its anchored
    // episode's paragraphs; copied text must contain the copy's global index
    for (const auto& alignment : alignments) {
        const EventPage* event = nullptr;
        for (const auto& ev : synopsis.events)
            if (ev.event_name == alignment.event_name) event = &ev;
        REQUIRE(event != nullptr);
        for (const auto& m : alignment.mappings) {
            REQUIRE_FALSE(m.is_prelude);  // fixture events have empty preludes
            const auto& para = event->body_paragraphs[static_cast<size_t>(m.position)];
            const Episode* ep = synopsis.find_episode(m.episode_anchor);
            REQUIRE(ep != nullptr);
            const int offset = synopsis.episode_offset(m.episode_anchor);
            auto texts = ep->paragraphs;
            texts.push_back(para.text);
            auto embs = backend.encode(texts);
            int best = -1;
            double best_sim = -2.0;
            for (size_t p = 0; p < ep->paragraphs.size(); ++p) {
                const double sim = cosine(embs[p], embs.back());
                if (sim > best_sim) {
                    best_sim = sim;
                    best = static_cast<int>(p);
                }
            }
            REQUIRE(std::find(m.global_indices.begin(), m.global_indices.end(), offset + best) !=
                    m.global_indices.end());
        }
    }

    auto report = alignment_report(alignments);
    REQUIRE(report.mapping_rate > 0.0);
    REQUIRE(report.mapping_rate <= 1.0);
}

TEST_CASE("mapped indices are consecutive with |mapped| in {1,2,3}", "[labeling]") {
    auto dir = fixtures::temp_dir("align_consec");
    auto path = fixtures::write_synopsis_dump(dir / "dump.jsonl", 4, 5, 3);
    auto synopsis = ingest_synopses(path, "show");
    HashedBowEncoder backend(128);
    for (const auto& alignment : align_events(synopsis, backend)) {
        for (const auto& m : alignment.mappings) {
            REQUIRE(m.global_indices.size() >= 1);
            REQUIRE(m.global_indices.size() <= 3);
            for (size_t i = 0; i + 1 < m.global_indices.size(); ++i)
                REQUIRE(m.global_indices[i + 1] == m.global_indices[i] + 1);
        }
    }
}

TEST_CASE("tv labels: prelude and earlier body map to 1, rest 0", "[labeling]") {
    // Hand-built alignment: one event, body positions 0,1,3 mapped to global
    // paragraphs 61, 70, 100; prelude mapped to 65.
    EventAlignment alignment;
    alignment.event_name = "ev";
    alignment.mappings = {
        {true, 0, "ep0", {65}},
        {false, 0, "ep0", {61}},
        {false, 1, "ep0", {70}},
        {false, 3, "ep0", {100}},
    };

    auto dir = fixtures::temp_dir("tv_labels");
    auto path = fixtures::write_synopsis_dump(dir / "dump.jsonl", 11, 10, 1);
    auto synopsis = ingest_synopses(path, "show");
    auto build = build_tv_instances(synopsis, {{"ev", 100}});
    REQUIRE(build.instances.size() == 1);

    auto labels = derive_tv_labels(build.instances[0], {alignment});
    // candidates are globals 99..40: cand_index = 99 - global
    REQUIRE(labels[99 - 65] == 1);  // prelude
    REQUIRE(labels[99 - 61] == 1);  // body position 0 < 3
    REQUIRE(labels[99 - 70] == 1);  // body position 1 < 3
    REQUIRE(std::count(labels.begin(), labels.end(), 1) == 3);
}

TEST_CASE("tv labels ignore mappings from other events", "[labeling]") {
    EventAlignment mine;
    mine.event_name = "ev";
    mine.mappings = {{false, 0, "ep0", {61}}, {false, 2, "ep0", {100}}};
    EventAlignment other;
    other.event_name = "other";
    other.mappings = {{false, 0, "ep0", {80}}, {false, 1, "ep0", {101}}};

    auto dir = fixtures::temp_dir("tv_scope");
    auto synopsis = ingest_synopses(fixtures::write_synopsis_dump(dir / "dump.jsonl", 11, 10, 1), "show");
    auto build = build_tv_instances(synopsis, {{"ev", 100}});
    auto labels = derive_tv_labels(build.instances[0], {mine, other});
    REQUIRE(labels[99 - 61] == 1);
    REQUIRE(labels[99 - 80] == 0);  // other event's mapping must not leak
    REQUIRE(std::count(labels.begin(), labels.end(), 1) == 1);
}

TEST_CASE("tv labels: exhaustive oracle over a 5-body-paragraph thread", "[labeling]") {
    // body positions 0..4 mapped to globals 70, 75, 80, 90, 100
    const std::vector<int> globals{70, 75, 80, 90, 100};
    EventAlignment alignment;
    alignment.event_name = "ev";
    for (int pos = 0; pos < 5; ++pos)
        alignment.mappings.push_back({false, pos, "ep0", {globals[static_cast<size_t>(pos)]}});

    auto dir = fixtures::temp_dir("tv_thread");
    auto synopsis = ingest_synopses(fixtures::write_synopsis_dump(dir / "dump.jsonl", 11, 10, 1), "show");

    for (int target_pos = 1; target_pos < 5; ++target_pos) {
        const int target_global = globals[static_cast<size_t>(target_pos)];
        auto build = build_tv_instances(synopsis, {{"ev", target_global}});
        REQUIRE(build.instances.size() == 1);
        auto labels = derive_tv_labels(build.instances[0], {alignment});
        // oracle: every strictly-earlier body position is a recap; nothing else
        for (int k = 0; k < kNumCandidates; ++k) {
            const int global = target_global - 1 - k;
            bool expected = false;
            for (int pos = 0; pos < target_pos; ++pos)
                if (globals[static_cast<size_t>(pos)] == global) expected = true;
            REQUIRE(labels[static_cast<size_t>(k)] == (expected ? 1 : 0));
        }
    }
}

TEST_CASE("label_tv_instances drops all-zero targets", "[labeling]") {
    EventAlignment alignment;
    alignment.event_name = "ev";
    alignment.mappings = {{false, 0, "ep0", {100}}};  // target maps at position 0: no recap

    auto dir = fixtures::temp_dir("tv_drop");
    auto synopsis = ingest_synopses(fixtures::write_synopsis_dump(dir / "dump.jsonl", 11, 10, 1), "show");
    auto build = build_tv_instances(synopsis, {{"ev", 100}});
    auto labeled = label_tv_instances(build.instances, {alignment});
    REQUIRE(labeled.instances.empty());
    REQUIRE(labeled.dropped_all_zero.size() == 1);
}
