#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <sstream>

#include "recap/backends.hpp"
#include "recap/line2note.hpp"
#include "recap/rng.hpp"

#include "fixtures.hpp"

using namespace recap;

namespace {

std::vector<std::string> make_words(int n) {
    std::vector<std::string> w;
    for (int i = 0; i < n; ++i) w.push_back("w" + std::to_string(i));
    return w;
}

std::shared_ptr<StubTokenizedEncoder> stub(int dim, bool trainable = false) {
    StubTokenizedEncoder::Options opts;
    opts.dim = dim;
    opts.trainable_scale = trainable;
    return std::make_shared<StubTokenizedEncoder>(opts);
}

// Pool of pairwise-disjoint note spans spread over one book.
std::vector<NoteLinePair> disjoint_pool(int count, const std::string& book = "book") {
    const int n = count * 30 + 10;
    auto words = make_words(n);
    std::vector<NoteLinePair> pool;
    for (int i = 0; i < count; ++i) {
        NoteRecord note{book, "note text " + std::to_string(i), i * 30, i * 30 + 4};
        pool.push_back(build_line(note, words, 8));
    }
    return pool;
}

Line2NoteModel constant_half_model(int dim, uint64_t seed = 3) {
    Line2NoteConfig cfg;
    cfg.seed = seed;
    auto model = init_line2note(stub(dim), cfg);
    std::fill(model.scorer.w.begin(), model.scorer.w.end(), 0.0);
    model.scorer.b[0] = 0.0;
    return model;
}

}  // namespace

TEST_CASE("line padding leaves an already long span untouched", "[l2n]") {
    auto words = make_words(100);
    auto pair = build_line(NoteRecord{"b", "some note", 10, 40}, words, 20);
    REQUIRE(pair.line_s == 10);
    REQUIRE(pair.line_e == 40);
    REQUIRE(pair.line_text == join_words(words, 10, 40));
}

TEST_CASE("line padding alternates sides starting on the left", "[l2n]") {
    auto words = make_words(100);
    auto pair = build_line(NoteRecord{"b", "note", 5, 6}, words, 10);
    REQUIRE(pair.line_s == 1);
    REQUIRE(pair.line_e == 10);
    REQUIRE(pair.line_e - pair.line_s + 1 == 10);
}

TEST_CASE("line padding spills to the right at the left text boundary", "[l2n]") {
    auto words = make_words(100);
    auto pair = build_line(NoteRecord{"b", "note", 0, 1}, words, 10);
    REQUIRE(pair.line_s == 0);
    REQUIRE(pair.line_e == 9);
}

TEST_CASE("line padding spills to the left at the right text boundary", "[l2n]") {
    auto words = make_words(100);
    auto pair = build_line(NoteRecord{"b", "note", 95, 96}, words, 10);
    REQUIRE(pair.line_s == 90);
    REQUIRE(pair.line_e == 99);
}

TEST_CASE("line padding rejects spans outside the text", "[l2n]") {
    auto words = make_words(50);
    REQUIRE_THROWS_AS(build_line(NoteRecord{"b", "n", 10, 50}, words, 10), Error);
    REQUIRE_THROWS_AS(build_line(NoteRecord{"b", "n", -1, 3}, words, 10), Error);
    try {
        build_line(NoteRecord{"b", "n", 7, 3}, words, 10);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "SpanOutOfRange");
    }
}

TEST_CASE("overlap rate is intersection over the shorter span", "[l2n]") {
    REQUIRE(overlap_rate(3, 7, 3, 7) == 1.0);
    REQUIRE(overlap_rate(10, 20, 15, 30) == Catch::Approx(6.0 / 11.0).margin(1e-15));
    REQUIRE(overlap_rate(0, 4, 10, 14) == 0.0);
    REQUIRE(overlap_rate(10, 20, 15, 30) == overlap_rate(15, 30, 10, 20));
    REQUIRE_THROWS_AS(overlap_rate(5, 4, 0, 3), Error);
}

TEST_CASE("positive sets always contain self and use a strict threshold", "[l2n]") {
    auto words = make_words(60);
    std::vector<NoteLinePair> pairs{
        build_line(NoteRecord{"b", "a", 0, 4}, words, 1),
        build_line(NoteRecord{"b", "b", 1, 5}, words, 1),  // overlap exactly 0.8
        build_line(NoteRecord{"b", "c", 40, 44}, words, 1),
    };
    auto pos = positive_sets(pairs, 0.8);
    REQUIRE(pos[0] == std::vector<int>{0});  // 4/5 = 0.8 is not > 0.8
    REQUIRE(pos[1] == std::vector<int>{1});
    REQUIRE(pos[2] == std::vector<int>{2});
}

TEST_CASE("positive sets match a brute-force oracle on random spans", "[l2n]") {
    auto words = make_words(200);
    Rng rng(substream_seed(17, {"l2n-pos"}));
    std::vector<NoteLinePair> pairs;
    for (int i = 0; i < 30; ++i) {
        int s = rng.uniform_int(0, 180);
        int e = s + rng.uniform_int(0, 15);
        pairs.push_back(build_line(NoteRecord{"b", "n" + std::to_string(i), s, e}, words, 1));
    }
    auto pos = positive_sets(pairs, 0.8);
    for (size_t i = 0; i < pairs.size(); ++i) {
        std::vector<int> expect;
        for (size_t j = 0; j < pairs.size(); ++j) {
            const int inter = std::min(pairs[i].e, pairs[j].e) - std::max(pairs[i].s, pairs[j].s) + 1;
            const int shorter = std::min(pairs[i].e - pairs[i].s, pairs[j].e - pairs[j].s) + 1;
            if (inter > 0 && static_cast<double>(inter) / shorter > 0.8) expect.push_back(static_cast<int>(j));
        }
        REQUIRE(pos[i] == expect);
        REQUIRE(std::find(pos[i].begin(), pos[i].end(), static_cast<int>(i)) != pos[i].end());
    }
}

TEST_CASE("batch sampling needs a big enough pool", "[l2n]") {
    auto pool = disjoint_pool(10);
    Rng rng(1);
    try {
        build_batch(pool, rng, 20);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "PoolTooSmall");
    }
    REQUIRE(build_batch(pool, rng, 10).pairs.size() == 10);
}

TEST_CASE("note records round trip through JSONL", "[l2n]") {
    std::vector<NoteRecord> notes{{"bookA", "first note", 3, 9}, {"bookB", "second", 0, 0}};
    std::stringstream buf;
    write_notes(buf, notes);
    auto back = read_notes(buf);
    REQUIRE(back.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        REQUIRE(back[i].book_id == notes[i].book_id);
        REQUIRE(back[i].note == notes[i].note);
        REQUIRE(back[i].s == notes[i].s);
        REQUIRE(back[i].e == notes[i].e);
    }

    std::stringstream bad(R"({"book_id":"b","note":"x","s":1})");
    try {
        read_notes(bad);
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "SchemaViolation");
    }
}

TEST_CASE("attention weights sum to one over active tokens and vanish elsewhere", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 5;
    auto model = init_line2note(stub(16), cfg);
    auto words = make_words(40);
    auto pair = build_line(NoteRecord{"b", "note words here", 12, 17}, words, 20);
    auto st = embed_line_state(model, pair);

    double total = 0.0;
    int active_count = 0;
    for (size_t t = 0; t < st.tokens.size(); ++t) {
        if (st.active[t]) {
            total += st.attn[t];
            REQUIRE(st.attn[t] > 0.0);
            ++active_count;
        } else {
            REQUIRE(st.attn[t] == 0.0);
        }
    }
    REQUIRE(active_count == 6);  // tokens of the original span only
    REQUIRE(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("a single-token note gets full attention", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 5;
    auto model = init_line2note(stub(8), cfg);
    auto st = embed_note_state(model, "lonely");
    REQUIRE(st.attn.size() == 1);
    REQUIRE(st.attn[0] == 1.0);
}

TEST_CASE("a line whose span covers everything embeds like a plain note", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 6;
    auto model = init_line2note(stub(16), cfg);  // shared pooler by default
    auto words = make_words(12);
    auto pair = build_line(NoteRecord{"b", join_words(words, 0, 11), 0, 11}, words, 1);
    REQUIRE(pair.line_text == pair.note_text);
    auto line_emb = embed_line(model, pair);
    auto note_emb = embed_note(model, pair.line_text);
    REQUIRE(line_emb == note_emb);
}

TEST_CASE("an all-0.5 scorer makes the 20x20 batch loss exactly 400 ln 2", "[l2n]") {
    auto model = constant_half_model(16);
    auto pool = disjoint_pool(20);
    NoteBatch batch{pool, positive_sets(pool, 0.8)};
    auto fwd = batch_forward(model, batch);
    REQUIRE(fwd.loss == Catch::Approx(400.0 * std::log(2.0)).margin(1e-9));

    SECTION("turning the negative term off keeps only the positives") {
        model.config.negatives_on = false;
        REQUIRE(batch_loss(model, batch) == Catch::Approx(20.0 * std::log(2.0)).margin(1e-9));
    }
}

TEST_CASE("analytic gradients agree with central finite differences", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 11;
    auto model = init_line2note(stub(4, /*trainable=*/true), cfg);
    auto words = make_words(40);
    std::vector<NoteLinePair> pairs{
        build_line(NoteRecord{"b", "first remembered thing", 0, 3}, words, 8),
        build_line(NoteRecord{"b", "second remembered thing", 2, 6}, words, 8),
        build_line(NoteRecord{"b", "a different scene", 20, 24}, words, 8),
        build_line(NoteRecord{"b", "final note", 30, 35}, words, 8),
    };
    NoteBatch batch{pairs, positive_sets(pairs, 0.8)};

    auto params = trainable_params(model);
    for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
    auto fwd = batch_forward(model, batch);
    batch_backward(model, batch, fwd);

    const double h = 1e-5;
    for (auto& p : params) {
        for (size_t i = 0; i < p.value->size(); ++i) {
            const double orig = (*p.value)[i];
            (*p.value)[i] = orig + h;
            const double lp = batch_loss(model, batch);
            (*p.value)[i] = orig - h;
            const double lm = batch_loss(model, batch);
            (*p.value)[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double tol = std::max(1e-6, 1e-4 * std::abs(fd));
            INFO(p.name << "[" << i << "]");
            REQUIRE(std::abs((*p.grad)[i] - fd) <= tol);
        }
    }
}

TEST_CASE("plain gradient steps drive the batch loss down monotonically", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 13;
    auto model = init_line2note(stub(4, /*trainable=*/true), cfg);
    auto words = make_words(60);
    std::vector<NoteLinePair> pairs;
    for (int i = 0; i < 6; ++i)
        pairs.push_back(build_line(NoteRecord{"b", "note " + std::to_string(i), i * 9, i * 9 + 3}, words, 8));
    NoteBatch batch{pairs, positive_sets(pairs, 0.8)};

    auto params = trainable_params(model);
    const double lr = 1e-3;
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) {
        for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
        auto fwd = batch_forward(model, batch);
        losses.push_back(fwd.loss);
        batch_backward(model, batch, fwd);
        for (auto& p : params)
            for (size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] -= lr * (*p.grad)[i];
    }
    for (size_t i = 0; i + 1 < losses.size(); ++i) REQUIRE(losses[i + 1] < losses[i]);
    REQUIRE(losses.back() < losses.front() - 1e-4);
}

TEST_CASE("evaluation is perfect when every note matches every line", "[l2n]") {
    auto model = constant_half_model(8);
    auto words = make_words(30);
    std::vector<NoteLinePair> pairs(
        20, build_line(NoteRecord{"b", "the one shared note", 5, 9}, words, 8));
    NoteBatch batch{pairs, positive_sets(pairs, 0.8)};
    Rng tie(substream_seed(1, {"tie"}));
    auto ev = eval_acc_hit1(model, {batch}, tie);
    REQUIRE(ev.acc == 1.0);
    REQUIRE(ev.hit1 == 1.0);
}

TEST_CASE("a constant scorer lands HIT@1 near chance on disjoint batches", "[l2n]") {
    auto model = constant_half_model(8);
    auto pool = disjoint_pool(20);
    NoteBatch batch{pool, positive_sets(pool, 0.8)};
    std::vector<NoteBatch> batches(30, batch);
    Rng tie(substream_seed(99, {"tie"}));
    auto ev = eval_acc_hit1(model, batches, tie);
    // each line's only positive is itself: 20 correct cells per row block
    REQUIRE(ev.acc == Catch::Approx(0.05).margin(1e-12));
    // ties over all 20 notes resolve uniformly: expect 1/20 hits
    REQUIRE(ev.hit1 > 0.005);
    REQUIRE(ev.hit1 < 0.15);
}

TEST_CASE("batching chunks each book separately and drops remainders", "[l2n]") {
    auto pool_a = disjoint_pool(45, "bookA");
    auto pool_b = disjoint_pool(25, "bookB");
    std::vector<NoteLinePair> all = pool_a;
    all.insert(all.end(), pool_b.begin(), pool_b.end());

    auto batches = make_batches(all, 20, 0.8, 7, "train");
    REQUIRE(batches.size() == 3);  // 45 -> 2, 25 -> 1
    int from_a = 0, from_b = 0;
    for (const auto& batch : batches) {
        REQUIRE(batch.pairs.size() == 20);
        const std::string book = batch.pairs.front().book_id;
        for (const auto& p : batch.pairs) REQUIRE(p.book_id == book);
        (book == "bookA" ? from_a : from_b) += 1;
    }
    REQUIRE(from_a == 2);
    REQUIRE(from_b == 1);

    auto again = make_batches(all, 20, 0.8, 7, "train");
    for (size_t b = 0; b < batches.size(); ++b)
        for (size_t i = 0; i < batches[b].pairs.size(); ++i)
            REQUIRE(batches[b].pairs[i].note_text == again[b].pairs[i].note_text);
}

TEST_CASE("checkpoints round trip bitwise", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 21;
    cfg.shared_pooler = false;
    auto model = init_line2note(stub(8, /*trainable=*/true), cfg);
    auto dir = fixtures::temp_dir("l2n-ckpt");
    save_checkpoint(model, dir);

    auto loaded = load_checkpoint(dir, stub(8, /*trainable=*/true));
    REQUIRE(loaded.pooler.P == model.pooler.P);
    REQUIRE(loaded.note_pooler.P == model.note_pooler.P);
    REQUIRE(loaded.scorer.w == model.scorer.w);
    REQUIRE(loaded.scorer.b[0] == model.scorer.b[0]);
    REQUIRE(snippet_embed(loaded, "some snippet text") == snippet_embed(model, "some snippet text"));

    try {
        load_checkpoint(dir, stub(16, /*trainable=*/true));
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "SchemaViolation");
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("snippet embedding is deterministic and equals the note path", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 8;
    auto model = init_line2note(stub(16), cfg);
    const std::string text = "a snippet describing an old escape";
    REQUIRE(snippet_embed(model, text) == embed_note(model, text));
    REQUIRE(snippet_embed(model, text) == snippet_embed(model, text));
}

TEST_CASE("the embedder adapter exposes trained snippet embeddings", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 9;
    auto model = std::make_shared<Line2NoteModel>(init_line2note(stub(16), cfg));
    Line2NoteEmbedder emb(model);
    REQUIRE(emb.dim() == 16);
    auto rows = emb.encode({"first text", "second text"});
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0] == snippet_embed(*model, "first text"));
    REQUIRE(rows[1] == snippet_embed(*model, "second text"));
    try {
        emb.encode({});
        FAIL("expected throw");
    } catch (const Error& e) {
        REQUIRE(e.kind() == "EmptyInput");
    }
}

TEST_CASE("two epochs of training improve dev HIT@1 on planted overlaps", "[l2n]") {
    Line2NoteConfig cfg;
    cfg.seed = 31;
    cfg.lr = 0.05;
    cfg.batch_size = 10;
    cfg.eval_batch_size = 10;
    cfg.epochs = 2;
    cfg.min_line_len = 8;
    auto model = init_line2note(stub(32, /*trainable=*/true), cfg);

    // notes that share a span overlap > 0.8 and use the same keyword, so a
    // learnable lexical signal separates positives from negatives
    auto words = make_words(2000);
    Rng rng(substream_seed(31, {"gen"}));
    std::vector<NoteLinePair> train, dev;
    for (int g = 0; g < 30; ++g) {
        const int s = g * 60;
        for (int rep = 0; rep < 4; ++rep) {
            NoteRecord note{"b", "keyword" + std::to_string(g) + " appears again", s, s + 9};
            auto pair = build_line(note, words, cfg.min_line_len);
            if (rep == 3)
                dev.push_back(pair);
            else
                train.push_back(pair);
        }
    }
    auto before_batches = make_batches(dev, cfg.eval_batch_size, cfg.positive_overlap, 5, "dev");
    Rng tie_before(substream_seed(5, {"tie"}));
    auto before = eval_acc_hit1(model, before_batches, tie_before);

    auto result = train_line2note(model, train, dev);
    REQUIRE(result.history.size() == 2);
    REQUIRE(result.best_epoch >= 0);

    Rng tie_after(substream_seed(5, {"tie"}));
    auto after = eval_acc_hit1(model, before_batches, tie_after);
    REQUIRE(after.hit1 >= before.hit1);
    REQUIRE(result.history.back().train_loss < result.history.front().train_loss * 1.0001);
}
