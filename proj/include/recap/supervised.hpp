#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/backends.hpp"
#include "recap/errors.hpp"
#include "recap/numeric.hpp"
#include "recap/ranking.hpp"
#include "recap/rng.hpp"
#include "recap/snippet.hpp"

namespace recap {

// ---------------------------------------------------------------------------
// Training pairs and leave-one-subset-out splits
// ---------------------------------------------------------------------------

struct PairExample {
    std::string target_text;  // event-name-prefixed when applicable
    std::string candidate_text;
    int label = 0;
    std::string subset;
};

inline std::vector<PairExample> build_pair_examples(const std::vector<TargetInstance>& instances,
                                                    const std::string& subset_tag,
                                                    bool event_prefix = true) {
    std::vector<PairExample> out;
    for (const auto& inst : instances) {
        if (!inst.labels)
            fail("SchemaViolation", "instance " + inst.target_uid + " has no labels to train on");
        const std::string target = target_encode_text(inst, event_prefix);
        for (size_t k = 0; k < inst.candidates.size(); ++k)
            out.push_back(PairExample{target, inst.candidates[k].text, (*inst.labels)[k], subset_tag});
    }
    return out;
}

struct SplitResult {
    std::vector<PairExample> train;
    std::vector<TargetInstance> eval;
};

// Hold one subset out for evaluation; training pairs come from all others.
inline SplitResult build_splits(const std::map<std::string, std::vector<TargetInstance>>& subsets,
                                const std::string& held_out, bool event_prefix = true) {
    if (subsets.size() < 2) fail("UnknownSubset", "need at least two subsets to build a split");
    if (!subsets.count(held_out)) fail("UnknownSubset", "held-out subset '" + held_out + "' not provided");
    SplitResult result;
    for (const auto& [tag, instances] : subsets) {
        if (tag == held_out) {
            result.eval = instances;
            continue;
        }
        auto pairs = build_pair_examples(instances, tag, event_prefix);
        result.train.insert(result.train.end(), pairs.begin(), pairs.end());
    }
    return result;
}

inline void write_pair_examples(std::ostream& out, const std::vector<PairExample>& pairs) {
    for (const auto& p : pairs) {
        nlohmann::json j{{"target_text", p.target_text},
                         {"candidate_text", p.candidate_text},
                         {"label", p.label},
                         {"subset", p.subset}};
        out << j.dump() << '\n';
    }
}

inline std::vector<PairExample> read_pair_examples(std::istream& in) {
    std::vector<PairExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        out.push_back(PairExample{j.at("target_text").get<std::string>(),
                                  j.at("candidate_text").get<std::string>(), j.at("label").get<int>(),
                                  j.at("subset").get<std::string>()});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Imbalance weights: w_y = 2 * (1/n_y)^alpha / sum_y' (1/n_y')^alpha
// ---------------------------------------------------------------------------

struct ClassWeights {
    double n0 = 0.0, n1 = 0.0;
    double alpha = 0.0;
    double w0 = 1.0, w1 = 1.0;
};

// Counts may be fractional (per-target rates work as well as raw counts —
// the formula only sees the ratio).
inline ClassWeights class_weights(double n0, double n1, double alpha) {
    if (n0 <= 0.0 || n1 <= 0.0) fail("ZeroClassCount", "class_weights needs positive counts");
    ClassWeights cw;
    cw.n0 = n0;
    cw.n1 = n1;
    cw.alpha = alpha;
    const double a0 = std::pow(1.0 / n0, alpha);
    const double a1 = std::pow(1.0 / n1, alpha);
    cw.w0 = 2.0 * a0 / (a0 + a1);
    cw.w1 = 2.0 * a1 / (a0 + a1);
    return cw;
}

// ---------------------------------------------------------------------------
// Pairwise classifier: mean-pooled pair encoding + logistic head
// ---------------------------------------------------------------------------

enum class Sampler { standard, weighted_oversample };

struct SupervisedConfig {
    double alpha = 0.0;  // 0 for plain encoders, 1 for similarity-pretrained ones
    double lr = 2e-5;    // searched within [1e-5, 3e-5]
    int epochs = 10;
    int batch = 32;
    int max_length = 256;  // pair token cap, from {128, 256}
    double warmup = 0.1;   // fraction of steps ramping lr up, then linear decay
    Sampler sampler = Sampler::standard;
    bool weighted = true;  // literal 1.0 weights when false (baseline parity)
    bool train_backend = true;
    std::string separator = " [SEP] ";
    uint64_t seed = 1;
};

struct PairwiseModel {
    std::shared_ptr<TokenizedEncoderBackend> backend;
    SupervisedConfig config;
    ClassWeights weights;
    Vec w;  // logistic head over the d-dim sequence representation
    Vec w_grad;
    Vec b{0.0};
    Vec b_grad{0.0};
};

inline PairwiseModel init_pairwise(std::shared_ptr<TokenizedEncoderBackend> backend,
                                   SupervisedConfig config = {}) {
    PairwiseModel model;
    const int d = backend->dim();
    model.backend = std::move(backend);
    model.config = config;
    model.w.assign(static_cast<size_t>(d), 0.0);
    model.w_grad.assign(static_cast<size_t>(d), 0.0);
    Rng rng(substream_seed(config.seed, {"pairwise", "init"}));
    for (auto& x : model.w) x = 0.1 * rng.normal();
    return model;
}

inline std::string pair_text(const PairExample& example, const std::string& separator) {
    return example.target_text + separator + example.candidate_text;
}

namespace detail {

struct PairForward {
    std::vector<Token> tokens;
    Mat hidden;
    Vec rep;  // mean over token hidden states
    double prob = 0.0;
};

inline PairForward pair_forward(const PairwiseModel& model, const std::string& text) {
    PairForward fwd;
    fwd.tokens = model.backend->tokenize(text);
    if (fwd.tokens.empty()) fail("EmptyInput", "pair text tokenizes to nothing");
    if (static_cast<int>(fwd.tokens.size()) > model.config.max_length)
        fwd.tokens.resize(static_cast<size_t>(model.config.max_length));
    fwd.hidden = model.backend->hidden_states(fwd.tokens);
    fwd.rep.assign(fwd.hidden.front().size(), 0.0);
    for (const auto& row : fwd.hidden)
        for (size_t i = 0; i < fwd.rep.size(); ++i) fwd.rep[i] += row[i];
    for (auto& x : fwd.rep) x /= static_cast<double>(fwd.hidden.size());
    fwd.prob = sigmoid(dot(model.w, fwd.rep) + model.b[0]);
    return fwd;
}

}  // namespace detail

inline double pair_probability(const PairwiseModel& model, const std::string& target_text,
                               const std::string& candidate_text) {
    return detail::pair_forward(model, target_text + model.config.separator + candidate_text).prob;
}

struct SupervisedEpochStats {
    int epoch = 0;
    double train_loss = 0.0;  // mean per example
    double dev_metric = 0.0;  // filled by the optional callback
};

struct SupervisedTrainResult {
    std::vector<SupervisedEpochStats> history;
};

// Weighted binary cross-entropy fine-tuning over (target, candidate) pair
// encodings. Weights come straight from class_weights over the training
// label counts; the weighted-oversample mode instead biases the draw (with
// replacement) by the same weights and leaves the loss unweighted.
inline SupervisedTrainResult train_pairwise(
    PairwiseModel& model, const std::vector<PairExample>& train_pairs,
    const std::function<double(const PairwiseModel&)>& dev_metric = nullptr) {
    const auto& cfg = model.config;
    double n0 = 0.0, n1 = 0.0;
    for (const auto& p : train_pairs) (p.label == 1 ? n1 : n0) += 1.0;
    if (n0 == 0.0 || n1 == 0.0) fail("SingleClassTrainSet", "training pairs contain a single class");
    model.weights = class_weights(n0, n1, cfg.alpha);

    std::vector<ParamBlock> params{{"head.w", &model.w, &model.w_grad},
                                   {"head.b", &model.b, &model.b_grad}};
    if (cfg.train_backend)
        for (auto& p : model.backend->trainable_params()) params.push_back(p);
    AdamOptimizer opt(params, AdamOptimizer::Options{cfg.lr});

    const size_t steps_per_epoch =
        (train_pairs.size() + static_cast<size_t>(cfg.batch) - 1) / static_cast<size_t>(cfg.batch);
    const size_t total_steps = steps_per_epoch * static_cast<size_t>(cfg.epochs);
    const size_t warmup_steps = static_cast<size_t>(cfg.warmup * static_cast<double>(total_steps));
    size_t step = 0;
    auto scheduled_lr = [&]() {
        if (total_steps <= 1) return cfg.lr;
        if (warmup_steps > 0 && step < warmup_steps)
            return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        const double remaining = static_cast<double>(total_steps - step) /
                                 static_cast<double>(std::max<size_t>(1, total_steps - warmup_steps));
        return cfg.lr * remaining;
    };

    SupervisedTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(substream_seed(cfg.seed, {"pairwise-epoch", std::to_string(epoch)}));
        std::vector<size_t> order;
        if (cfg.sampler == Sampler::weighted_oversample) {
            // draw with replacement, probability proportional to w_{y_i}
            double total = 0.0;
            std::vector<double> cumulative(train_pairs.size());
            for (size_t i = 0; i < train_pairs.size(); ++i) {
                total += train_pairs[i].label == 1 ? model.weights.w1 : model.weights.w0;
                cumulative[i] = total;
            }
            for (size_t i = 0; i < train_pairs.size(); ++i) {
                const double u = rng.uniform01() * total;
                order.push_back(static_cast<size_t>(
                    std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()));
            }
        } else {
            order.resize(train_pairs.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
        }

        double loss_sum = 0.0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch)) {
            const size_t end = std::min(order.size(), off + static_cast<size_t>(cfg.batch));
            for (size_t x = off; x < end; ++x) {
                const PairExample& ex = train_pairs[order[x]];
                const auto fwd = detail::pair_forward(model, pair_text(ex, cfg.separator));
                const double p = std::min(std::max(fwd.prob, 1e-12), 1.0 - 1e-12);
                double weight = 1.0;
                if (cfg.weighted && cfg.sampler == Sampler::standard)
                    weight = ex.label == 1 ? model.weights.w1 : model.weights.w0;
                loss_sum += weight * -(ex.label == 1 ? std::log(p) : std::log(1.0 - p));

                const double dz = weight * (fwd.prob - static_cast<double>(ex.label));
                for (size_t i = 0; i < model.w.size(); ++i) model.w_grad[i] += dz * fwd.rep[i];
                model.b_grad[0] += dz;
                if (cfg.train_backend) {
                    const double scale = dz / static_cast<double>(fwd.hidden.size());
                    Mat dhidden(fwd.hidden.size(), Vec(model.w.size(), 0.0));
                    for (size_t t = 0; t < fwd.hidden.size(); ++t)
                        for (size_t i = 0; i < model.w.size(); ++i) dhidden[t][i] = scale * model.w[i];
                    model.backend->accumulate_hidden_grad(fwd.tokens, dhidden);
                }
            }
            opt.set_lr(scheduled_lr());
            opt.step();
            ++step;
        }

        SupervisedEpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        if (dev_metric) stats.dev_metric = dev_metric(model);
        result.history.push_back(stats);
    }
    return result;
}

// Rank an instance's candidates by classifier positive-probability.
inline RankedPrediction score_pairs(const PairwiseModel& model, const TargetInstance& instance,
                                    RankOptions options = {},
                                    const std::set<int>* admissible = nullptr) {
    const std::string target = target_encode_text(instance, options.event_prefix);
    RankedPrediction pred;
    pred.target_uid = instance.target_uid;
    pred.policy = options.policy;
    pred.scores.assign(instance.candidates.size(), kInadmissible);
    for (size_t k = 0; k < instance.candidates.size(); ++k) {
        const int idx = *instance.candidates[k].cand_index;
        if (admissible && !admissible->count(idx)) continue;
        pred.scores[k] = pair_probability(model, target, instance.candidates[k].text);
    }
    pred.selected = select(pred.scores, options.policy, options.threshold);
    if (options.filter_fallback) pred.flags.push_back("filter_fallback");
    return pred;
}

}  // namespace recap
