#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/backends.hpp"
#include "recap/errors.hpp"
#include "recap/numeric.hpp"
#include "recap/rng.hpp"
#include "recap/text.hpp"

namespace recap {

// ---------------------------------------------------------------------------
// Note records and note-line pairs
// ---------------------------------------------------------------------------

struct NoteRecord {
    std::string book_id;
    std::string note;
    int s = 0;  // inclusive word-index span the note attaches to
    int e = 0;
};

inline std::vector<NoteRecord> read_notes(std::istream& in) {
    std::vector<NoteRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            fail("SchemaViolation", "notes line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const char* key : {"book_id", "note", "s", "e"})
            if (!j.contains(key))
                fail("SchemaViolation", "notes line " + std::to_string(lineno) + " missing field '" + key + "'");
        out.push_back(NoteRecord{j.at("book_id").get<std::string>(), j.at("note").get<std::string>(),
                                 j.at("s").get<int>(), j.at("e").get<int>()});
    }
    return out;
}

inline void write_notes(std::ostream& out, const std::vector<NoteRecord>& notes) {
    for (const auto& n : notes) {
        nlohmann::json j{{"book_id", n.book_id}, {"note", n.note}, {"s", n.s}, {"e", n.e}};
        out << j.dump() << '\n';
    }
}

struct NoteLinePair {
    std::string book_id;
    std::string note_text;
    int note_len = 0;  // words in the note
    int s = 0, e = 0;  // original note span (book word indices, inclusive)
    int line_s = 0, line_e = 0;  // padded line span with line_s <= s <= e <= line_e
    std::string line_text;
};

// Pad the note's span with surrounding context until it reaches
// min_line_len words, alternating sides starting on the left; when one side
// hits the text boundary the remainder goes to the other side.
inline NoteLinePair build_line(const NoteRecord& note, const std::vector<std::string>& book_words,
                               int min_line_len) {
    const int n = static_cast<int>(book_words.size());
    if (note.s < 0 || note.e < note.s || note.e >= n)
        fail("SpanOutOfRange", "note span (" + std::to_string(note.s) + "," + std::to_string(note.e) +
                                   ") outside text of " + std::to_string(n) + " words");
    int s = note.s, e = note.e;
    bool left_turn = true;
    while (e - s + 1 < min_line_len && (s > 0 || e < n - 1)) {
        if ((left_turn && s > 0) || e >= n - 1)
            --s;
        else
            ++e;
        left_turn = !left_turn;
    }

    NoteLinePair pair;
    pair.book_id = note.book_id;
    pair.note_text = note.note;
    pair.note_len = static_cast<int>(split_words(note.note).size());
    pair.s = note.s;
    pair.e = note.e;
    pair.line_s = s;
    pair.line_e = e;
    pair.line_text = join_words(book_words, s, e);
    return pair;
}

// Inclusive intersection length over the length of the shorter span.
inline double overlap_rate(int a_s, int a_e, int b_s, int b_e) {
    if (a_e < a_s || b_e < b_s) fail("SpanOutOfRange", "overlap_rate over an empty span");
    const int inter = std::min(a_e, b_e) - std::max(a_s, b_s) + 1;
    if (inter <= 0) return 0.0;
    const int shorter = std::min(a_e - a_s, b_e - b_s) + 1;
    return static_cast<double>(inter) / shorter;
}

struct NoteBatch {
    std::vector<NoteLinePair> pairs;
    std::vector<std::vector<int>> positives;  // P_i: sorted, always contains i
};

inline std::vector<std::vector<int>> positive_sets(const std::vector<NoteLinePair>& pairs,
                                                   double positive_overlap = 0.8) {
    std::vector<std::vector<int>> out(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i)
        for (size_t j = 0; j < pairs.size(); ++j)
            if (overlap_rate(pairs[i].s, pairs[i].e, pairs[j].s, pairs[j].e) > positive_overlap)
                out[i].push_back(static_cast<int>(j));
    return out;
}

// Sample `size` pairs from one book's pool (without replacement) and mark
// every pair whose spans overlap by more than `positive_overlap` of the
// shorter span as mutual positives; a span fully overlaps itself, so i is
// always in its own positive set.
inline NoteBatch build_batch(const std::vector<NoteLinePair>& pool, Rng& rng, int size = 20,
                             double positive_overlap = 0.8) {
    if (static_cast<int>(pool.size()) < size)
        fail("PoolTooSmall", "need " + std::to_string(size) + " pairs, pool has " +
                                 std::to_string(pool.size()));
    std::vector<int> idx(pool.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    for (int i = 0; i < size; ++i)
        std::swap(idx[static_cast<size_t>(i)],
                  idx[static_cast<size_t>(rng.uniform_int(i, static_cast<int>(idx.size()) - 1))]);

    NoteBatch batch;
    for (int i = 0; i < size; ++i) batch.pairs.push_back(pool[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
    batch.positives = positive_sets(batch.pairs, positive_overlap);
    return batch;
}

// ---------------------------------------------------------------------------
// Model: span-masked attention pooling + 4d->1 pair scorer
// ---------------------------------------------------------------------------

struct Line2NoteConfig {
    int batch_size = 20;
    int eval_batch_size = 12;
    int epochs = 2;
    double lr = 3e-5;  // from the searched grid; desk-scale runs override
    std::vector<double> lr_search = {3e-5, 2e-5, 1e-5, 5e-6, 1e-6};
    int min_line_len = 64;
    double positive_overlap = 0.8;
    bool negatives_on = true;   // add -log(1-score) for out-of-set pairs
    bool shared_pooler = true;  // one projection for both notes and lines
    bool train_backend = true;  // push gradients into backend adapter params
    double clamp_eps = 1e-7;
    uint64_t seed = 1;
};

struct AttentionPooler {
    Vec P;
    Vec P_grad;

    explicit AttentionPooler(int d = 0) : P(static_cast<size_t>(d), 0.0), P_grad(static_cast<size_t>(d), 0.0) {}
};

struct PairScorer {
    Vec w;  // 4d
    Vec w_grad;
    Vec b{0.0};  // scalar bias, held as a 1-vector for optimizer registration
    Vec b_grad{0.0};

    explicit PairScorer(int d = 0)
        : w(static_cast<size_t>(4 * d), 0.0), w_grad(static_cast<size_t>(4 * d), 0.0) {}
};

struct Line2NoteModel {
    std::shared_ptr<TokenizedEncoderBackend> backend;
    Line2NoteConfig config;
    AttentionPooler pooler;       // lines; notes too when shared_pooler
    AttentionPooler note_pooler;  // only used when !shared_pooler
    PairScorer scorer;

    const AttentionPooler& pooler_for_notes() const { return config.shared_pooler ? pooler : note_pooler; }
    AttentionPooler& pooler_for_notes() { return config.shared_pooler ? pooler : note_pooler; }
};

inline Line2NoteModel init_line2note(std::shared_ptr<TokenizedEncoderBackend> backend,
                                     Line2NoteConfig config = {}) {
    Line2NoteModel model;
    const int d = backend->dim();
    model.backend = std::move(backend);
    model.config = config;
    model.pooler = AttentionPooler(d);
    model.note_pooler = AttentionPooler(d);
    model.scorer = PairScorer(d);
    Rng rng(substream_seed(config.seed, {"l2n", "init"}));
    for (auto& x : model.pooler.P) x = 0.1 * rng.normal();
    for (auto& x : model.note_pooler.P) x = 0.1 * rng.normal();
    for (auto& x : model.scorer.w) x = 0.1 * rng.normal();
    return model;
}

// Cached forward state for one pooled embedding, kept around for backprop.
struct PooledState {
    std::vector<Token> tokens;
    Mat hidden;                // T x d
    std::vector<bool> active;  // attention support
    Vec attn;                  // softmax weights; exactly 0 off-support
    Vec value;                 // weighted sum of hidden rows
    bool span_expanded = false;  // span boundary fell inside a token
};

inline PooledState pooled_forward(const TokenizedEncoderBackend& backend, const AttentionPooler& pooler,
                                  const std::string& text, std::optional<std::pair<int, int>> word_span) {
    PooledState st;
    st.tokens = backend.tokenize(text);
    if (st.tokens.empty()) fail("EmptyNote", "text tokenizes to nothing");
    st.hidden = backend.hidden_states(st.tokens);
    st.active.assign(st.tokens.size(), true);
    if (word_span) {
        const auto [ws, we] = *word_span;
        for (size_t t = 0; t < st.tokens.size(); ++t) {
            const Token& tok = st.tokens[t];
            st.active[t] = tok.word_end >= ws && tok.word_begin <= we;
            if (st.active[t] && (tok.word_begin < ws || tok.word_end > we)) st.span_expanded = true;
        }
        if (std::find(st.active.begin(), st.active.end(), true) == st.active.end())
            fail("SpanTokenizationMismatch", "span covers no tokens of the line");
    }
    Vec logits(st.tokens.size());
    for (size_t t = 0; t < st.tokens.size(); ++t) logits[t] = dot(st.hidden[t], pooler.P);
    st.attn = masked_softmax(logits, st.active);
    st.value.assign(st.hidden.front().size(), 0.0);
    for (size_t t = 0; t < st.tokens.size(); ++t)
        if (st.active[t])
            for (size_t i = 0; i < st.value.size(); ++i) st.value[i] += st.attn[t] * st.hidden[t][i];
    return st;
}

// Attention over the full note: mask is trivially all-ones.
inline PooledState embed_note_state(const Line2NoteModel& model, const std::string& note_text) {
    return pooled_forward(*model.backend, model.pooler_for_notes(), note_text, std::nullopt);
}

// Attention over the line, masked to the tokens of the original note span.
// Token positions are word positions relative to the line start; a span
// boundary inside a multi-word token expands to the covering token.
inline PooledState embed_line_state(const Line2NoteModel& model, const NoteLinePair& pair) {
    const int rel_s = pair.s - pair.line_s;
    const int rel_e = pair.e - pair.line_s;
    return pooled_forward(*model.backend, model.pooler, pair.line_text, std::make_pair(rel_s, rel_e));
}

inline Vec embed_note(const Line2NoteModel& model, const std::string& note_text) {
    return embed_note_state(model, note_text).value;
}

inline Vec embed_line(const Line2NoteModel& model, const NoteLinePair& pair) {
    return embed_line_state(model, pair).value;
}

// [Ew ; Em ; Ew - Em ; Ew * Em]
inline Vec pair_features(const Vec& ew, const Vec& em) {
    if (ew.size() != em.size()) fail("DimensionMismatch", "pair_features on vectors of unequal length");
    Vec f;
    f.reserve(4 * ew.size());
    f.insert(f.end(), ew.begin(), ew.end());
    f.insert(f.end(), em.begin(), em.end());
    for (size_t i = 0; i < ew.size(); ++i) f.push_back(ew[i] - em[i]);
    for (size_t i = 0; i < ew.size(); ++i) f.push_back(ew[i] * em[i]);
    return f;
}

inline double pair_score(const PairScorer& scorer, const Vec& ew, const Vec& em) {
    const Vec f = pair_features(ew, em);
    if (f.size() != scorer.w.size())
        fail("DimensionMismatch", "scorer expects 4d = " + std::to_string(scorer.w.size()) +
                                      " features, got " + std::to_string(f.size()));
    return sigmoid(dot(scorer.w, f) + scorer.b[0]);
}

// ---------------------------------------------------------------------------
// Batch objective and manual gradients
// ---------------------------------------------------------------------------

struct BatchForward {
    std::vector<PooledState> lines;
    std::vector<PooledState> notes;
    Mat scores;  // scores[i][j] = score(line i, note j)
    double loss = 0.0;
};

inline double clamped_log(double x, double eps) { return std::log(std::min(std::max(x, eps), 1.0 - eps)); }

// Every line i is scored against every note j in the batch: positives
// (overlapping spans) contribute -log(score), the rest -log(1 - score) when
// the negative term is enabled.
inline BatchForward batch_forward(const Line2NoteModel& model, const NoteBatch& batch) {
    BatchForward fwd;
    const size_t n = batch.pairs.size();
    fwd.lines.reserve(n);
    fwd.notes.reserve(n);
    for (const auto& pair : batch.pairs) {
        fwd.lines.push_back(embed_line_state(model, pair));
        fwd.notes.push_back(embed_note_state(model, pair.note_text));
    }
    fwd.scores.assign(n, Vec(n, 0.0));
    const double eps = model.config.clamp_eps;
    for (size_t i = 0; i < n; ++i) {
        std::vector<bool> is_pos(n, false);
        for (int j : batch.positives[i]) is_pos[static_cast<size_t>(j)] = true;
        for (size_t j = 0; j < n; ++j) {
            const double s = pair_score(model.scorer, fwd.lines[i].value, fwd.notes[j].value);
            fwd.scores[i][j] = s;
            if (is_pos[j])
                fwd.loss -= clamped_log(s, eps);
            else if (model.config.negatives_on)
                fwd.loss -= clamped_log(1.0 - s, eps);
        }
    }
    return fwd;
}

// Softmax-attention backward: given dL/d(value), accumulate dL/dP and, when
// requested, push dL/d(hidden) into the backend.
inline void attention_backward(Line2NoteModel& model, const PooledState& st, const Vec& dvalue,
                               AttentionPooler& pooler) {
    const size_t T = st.tokens.size();
    Vec da(T, 0.0);
    double weighted = 0.0;
    for (size_t t = 0; t < T; ++t) {
        if (!st.active[t]) continue;
        da[t] = dot(dvalue, st.hidden[t]);
        weighted += st.attn[t] * da[t];
    }
    Mat dhidden;
    if (model.config.train_backend) dhidden.assign(T, Vec(st.value.size(), 0.0));
    for (size_t t = 0; t < T; ++t) {
        if (!st.active[t]) continue;
        const double dz = st.attn[t] * (da[t] - weighted);
        for (size_t i = 0; i < st.value.size(); ++i) {
            pooler.P_grad[i] += dz * st.hidden[t][i];
            if (model.config.train_backend)
                dhidden[t][i] = st.attn[t] * dvalue[i] + dz * pooler.P[i];
        }
    }
    if (model.config.train_backend) model.backend->accumulate_hidden_grad(st.tokens, dhidden);
}

// Accumulate gradients of the batch loss into the model's grad buffers.
// Scores pass through a sigmoid, so dL/d(logit) is (score - 1) on positive
// pairs and score on negative ones — exact wherever the clamp is inactive.
inline void batch_backward(Line2NoteModel& model, const NoteBatch& batch, const BatchForward& fwd) {
    const size_t n = batch.pairs.size();
    const size_t d = fwd.lines.front().value.size();
    Mat dline(n, Vec(d, 0.0));
    Mat dnote(n, Vec(d, 0.0));
    const double* w1 = model.scorer.w.data();
    const double* w2 = w1 + d;
    const double* w3 = w2 + d;
    const double* w4 = w3 + d;

    for (size_t i = 0; i < n; ++i) {
        std::vector<bool> is_pos(n, false);
        for (int j : batch.positives[i]) is_pos[static_cast<size_t>(j)] = true;
        for (size_t j = 0; j < n; ++j) {
            double dz;
            if (is_pos[j])
                dz = fwd.scores[i][j] - 1.0;
            else if (model.config.negatives_on)
                dz = fwd.scores[i][j];
            else
                continue;
            const Vec& ew = fwd.lines[i].value;
            const Vec& em = fwd.notes[j].value;
            const Vec f = pair_features(ew, em);
            for (size_t x = 0; x < f.size(); ++x) model.scorer.w_grad[x] += dz * f[x];
            model.scorer.b_grad[0] += dz;
            for (size_t x = 0; x < d; ++x) {
                dline[i][x] += dz * (w1[x] + w3[x] + w4[x] * em[x]);
                dnote[j][x] += dz * (w2[x] - w3[x] + w4[x] * ew[x]);
            }
        }
    }
    for (size_t i = 0; i < n; ++i) attention_backward(model, fwd.lines[i], dline[i], model.pooler);
    for (size_t j = 0; j < n; ++j) attention_backward(model, fwd.notes[j], dnote[j], model.pooler_for_notes());
}

inline double batch_loss(const Line2NoteModel& model, const NoteBatch& batch) {
    return batch_forward(model, batch).loss;
}

inline std::vector<ParamBlock> trainable_params(Line2NoteModel& model) {
    std::vector<ParamBlock> params{{"pooler.P", &model.pooler.P, &model.pooler.P_grad},
                                   {"scorer.w", &model.scorer.w, &model.scorer.w_grad},
                                   {"scorer.b", &model.scorer.b, &model.scorer.b_grad}};
    if (!model.config.shared_pooler)
        params.push_back({"note_pooler.P", &model.note_pooler.P, &model.note_pooler.P_grad});
    if (model.config.train_backend)
        for (auto& p : model.backend->trainable_params()) params.push_back(p);
    return params;
}

// ---------------------------------------------------------------------------
// Evaluation: per-batch classification accuracy and HIT@1
// ---------------------------------------------------------------------------

struct EvalScores {
    double acc = 0.0;   // (line, note) decisions score>=0.5 vs membership
    double hit1 = 0.0;  // top-scored note lands in the line's positive set
};

inline EvalScores eval_acc_hit1(const Line2NoteModel& model, const std::vector<NoteBatch>& batches,
                                Rng& tie_rng) {
    if (batches.empty()) fail("PoolTooSmall", "no evaluation batches");
    double acc_sum = 0.0;
    double hit_sum = 0.0;
    size_t line_count = 0;
    for (const auto& batch : batches) {
        const auto fwd = batch_forward(model, batch);
        const size_t n = batch.pairs.size();
        size_t correct = 0;
        for (size_t i = 0; i < n; ++i) {
            std::vector<bool> is_pos(n, false);
            for (int j : batch.positives[i]) is_pos[static_cast<size_t>(j)] = true;
            double best = -1.0;
            std::vector<int> argmax;
            for (size_t j = 0; j < n; ++j) {
                const bool predicted = fwd.scores[i][j] >= 0.5;
                if (predicted == is_pos[j]) ++correct;
                if (fwd.scores[i][j] > best) {
                    best = fwd.scores[i][j];
                    argmax.assign(1, static_cast<int>(j));
                } else if (fwd.scores[i][j] == best) {
                    argmax.push_back(static_cast<int>(j));
                }
            }
            const int pick = argmax[static_cast<size_t>(
                tie_rng.uniform_int(0, static_cast<int>(argmax.size()) - 1))];
            if (is_pos[static_cast<size_t>(pick)]) hit_sum += 1.0;
            ++line_count;
        }
        acc_sum += static_cast<double>(correct) / static_cast<double>(n * n);
    }
    return EvalScores{acc_sum / static_cast<double>(batches.size()),
                      hit_sum / static_cast<double>(line_count)};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline std::map<std::string, std::vector<NoteLinePair>> group_by_book(const std::vector<NoteLinePair>& pairs) {
    std::map<std::string, std::vector<NoteLinePair>> out;
    for (const auto& p : pairs) out[p.book_id].push_back(p);
    return out;
}

// Chunk each book's shuffled pool into full batches (remainders dropped).
inline std::vector<NoteBatch> make_batches(const std::vector<NoteLinePair>& pairs, int batch_size,
                                           double positive_overlap, uint64_t seed,
                                           std::string_view stream_name) {
    std::vector<NoteBatch> batches;
    for (auto& [book_id, pool] : group_by_book(pairs)) {
        Rng rng(substream_seed(seed, {stream_name, book_id}));
        std::vector<NoteLinePair> shuffled = pool;
        rng.shuffle(shuffled);
        for (size_t off = 0; off + static_cast<size_t>(batch_size) <= shuffled.size();
             off += static_cast<size_t>(batch_size)) {
            NoteBatch batch;
            batch.pairs.assign(shuffled.begin() + static_cast<long>(off),
                               shuffled.begin() + static_cast<long>(off) + batch_size);
            batch.positives = positive_sets(batch.pairs, positive_overlap);
            batches.push_back(std::move(batch));
        }
    }
    return batches;
}

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;  // mean per batch
    double dev_acc = 0.0;
    double dev_hit1 = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;  // by dev ACC
};

namespace detail {

inline std::vector<Vec> snapshot_values(std::vector<ParamBlock>& params) {
    std::vector<Vec> out;
    for (auto& p : params) out.push_back(*p.value);
    return out;
}

inline void restore_values(std::vector<ParamBlock>& params, const std::vector<Vec>& snap) {
    for (size_t i = 0; i < params.size(); ++i) *params[i].value = snap[i];
}

}  // namespace detail

// Epochs of book-grouped batches; checkpoint = parameter snapshot at the
// best dev ACC, restored before returning. Fully deterministic per seed.
inline TrainResult train_line2note(Line2NoteModel& model, const std::vector<NoteLinePair>& train_pairs,
                                   const std::vector<NoteLinePair>& dev_pairs) {
    const auto& cfg = model.config;
    auto params = trainable_params(model);
    AdamOptimizer opt(params, AdamOptimizer::Options{cfg.lr});

    const auto dev_batches =
        make_batches(dev_pairs, cfg.eval_batch_size, cfg.positive_overlap, cfg.seed, "l2n-dev");

    TrainResult result;
    double best_acc = -1.0;
    std::vector<Vec> best_snapshot;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = make_batches(train_pairs, cfg.batch_size, cfg.positive_overlap,
                                    substream_seed(cfg.seed, {"l2n-epoch", std::to_string(epoch)}),
                                    "shuffle");
        Rng order_rng(substream_seed(cfg.seed, {"l2n-batch-order", std::to_string(epoch)}));
        order_rng.shuffle(batches);

        double loss_sum = 0.0;
        for (const auto& batch : batches) {
            const auto fwd = batch_forward(model, batch);
            loss_sum += fwd.loss;
            batch_backward(model, batch, fwd);
            opt.step();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
        if (!dev_batches.empty()) {
            Rng tie_rng(substream_seed(cfg.seed, {"l2n-dev-ties", std::to_string(epoch)}));
            const auto scores = eval_acc_hit1(model, dev_batches, tie_rng);
            stats.dev_acc = scores.acc;
            stats.dev_hit1 = scores.hit1;
            if (scores.acc > best_acc) {
                best_acc = scores.acc;
                result.best_epoch = epoch;
                best_snapshot = detail::snapshot_values(params);
            }
        }
        result.history.push_back(stats);
    }
    if (!best_snapshot.empty()) detail::restore_values(params, best_snapshot);
    return result;
}

// A trained snippet embedding treats the whole text as a line whose span is
// everything, which collapses to plain note attention.
inline Vec snippet_embed(const Line2NoteModel& model, const std::string& snippet_text) {
    return embed_note(model, snippet_text);
}

// EmbeddingBackend adapter so the ranking module can consume a trained model.
class Line2NoteEmbedder : public EmbeddingBackend {
public:
    explicit Line2NoteEmbedder(std::shared_ptr<const Line2NoteModel> model) : model_(std::move(model)) {}

    std::string model_id() const override { return "l2n:" + model_->backend->model_id(); }
    int dim() const override { return model_->backend->dim(); }
    int max_length() const override { return model_->backend->max_length(); }

    Mat encode(const std::vector<std::string>& texts) const override {
        if (texts.empty()) fail("EmptyInput", "encode called with no texts");
        Mat out;
        for (const auto& t : texts) out.push_back(snippet_embed(*model_, t));
        return out;
    }

private:
    std::shared_ptr<const Line2NoteModel> model_;
};

// ---------------------------------------------------------------------------
// Checkpoints: pooler + scorer + backend adapter values + config snapshot
// ---------------------------------------------------------------------------

inline void save_checkpoint(Line2NoteModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["backend_model_id"] = model.backend->model_id();
    j["dim"] = model.backend->dim();
    j["pooler_P"] = model.pooler.P;
    if (!model.config.shared_pooler) j["note_pooler_P"] = model.note_pooler.P;
    j["scorer_w"] = model.scorer.w;
    j["scorer_b"] = model.scorer.b[0];
    nlohmann::json backend_params = nlohmann::json::object();
    for (auto& p : model.backend->trainable_params()) backend_params[p.name] = *p.value;
    j["backend_params"] = backend_params;

    nlohmann::json cfg{{"batch_size", model.config.batch_size},
                       {"eval_batch_size", model.config.eval_batch_size},
                       {"epochs", model.config.epochs},
                       {"lr", model.config.lr},
                       {"min_line_len", model.config.min_line_len},
                       {"positive_overlap", model.config.positive_overlap},
                       {"negatives_on", model.config.negatives_on},
                       {"shared_pooler", model.config.shared_pooler},
                       {"train_backend", model.config.train_backend},
                       {"seed", model.config.seed}};
    std::ofstream(dir / "model.json") << j.dump(2) << '\n';
    std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
}

inline Line2NoteModel load_checkpoint(const std::filesystem::path& dir,
                                      std::shared_ptr<TokenizedEncoderBackend> backend) {
    std::ifstream model_in(dir / "model.json");
    if (!model_in) fail("SchemaViolation", "missing checkpoint file " + (dir / "model.json").string());
    nlohmann::json j = nlohmann::json::parse(model_in);
    std::ifstream cfg_in(dir / "config.json");
    if (!cfg_in) fail("SchemaViolation", "missing checkpoint file " + (dir / "config.json").string());
    nlohmann::json cfg = nlohmann::json::parse(cfg_in);

    if (j.at("backend_model_id").get<std::string>() != backend->model_id())
        fail("SchemaViolation", "checkpoint was trained with backend '" +
                                    j.at("backend_model_id").get<std::string>() + "', got '" +
                                    backend->model_id() + "'");

    Line2NoteConfig config;
    config.batch_size = cfg.at("batch_size").get<int>();
    config.eval_batch_size = cfg.at("eval_batch_size").get<int>();
    config.epochs = cfg.at("epochs").get<int>();
    config.lr = cfg.at("lr").get<double>();
    config.min_line_len = cfg.at("min_line_len").get<int>();
    config.positive_overlap = cfg.at("positive_overlap").get<double>();
    config.negatives_on = cfg.at("negatives_on").get<bool>();
    config.shared_pooler = cfg.at("shared_pooler").get<bool>();
    config.train_backend = cfg.at("train_backend").get<bool>();
    config.seed = cfg.at("seed").get<uint64_t>();

    Line2NoteModel model = init_line2note(backend, config);
    model.pooler.P = j.at("pooler_P").get<Vec>();
    if (!config.shared_pooler) model.note_pooler.P = j.at("note_pooler_P").get<Vec>();
    model.scorer.w = j.at("scorer_w").get<Vec>();
    model.scorer.b[0] = j.at("scorer_b").get<double>();
    for (auto& p : backend->trainable_params())
        if (j.at("backend_params").contains(p.name)) *p.value = j.at("backend_params").at(p.name).get<Vec>();
    return model;
}

}  // namespace recap
