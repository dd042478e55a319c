#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "recap/errors.hpp"
#include "recap/hash.hpp"
#include "recap/numeric.hpp"
#include "recap/rng.hpp"
#include "recap/text.hpp"
#include "recap/tokenizer.hpp"

namespace recap {

// ---------------------------------------------------------------------------
// Text encoders
// ---------------------------------------------------------------------------

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string model_id() const = 0;
    virtual int dim() const = 0;
    virtual int max_length() const = 0;

    // Row i embeds texts[i]; deterministic for a fixed model_id.
    virtual Mat encode(const std::vector<std::string>& texts) const = 0;
};

// Deterministic offline encoder: lowercased whitespace words hashed into d
// buckets, vector of counts. Every pipeline test runs against this.
class HashedBowEncoder : public EmbeddingBackend {
public:
    explicit HashedBowEncoder(int dim = 64, int max_length = 8192) : dim_(dim), max_length_(max_length) {}

    std::string model_id() const override { return "hashed-bow-d" + std::to_string(dim_); }
    int dim() const override { return dim_; }
    int max_length() const override { return max_length_; }

    Mat encode(const std::vector<std::string>& texts) const override {
        if (texts.empty()) fail("EmptyInput", "encode called with no texts");
        Mat out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            Vec v(static_cast<size_t>(dim_), 0.0);
            auto words = split_words(lowercase(text));
            if (words.size() > static_cast<size_t>(max_length_)) words.resize(static_cast<size_t>(max_length_));
            for (const auto& w : words) v[fnv1a64(w) % static_cast<uint64_t>(dim_)] += 1.0;
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    int dim_;
    int max_length_;
};

// ---------------------------------------------------------------------------
// Tokenized encoders (per-token hidden states + training contract)
// ---------------------------------------------------------------------------

struct Token {
    std::string piece;
    int word_begin = 0;  // inclusive word-index range this token covers
    int word_end = 0;
};

// Adapter fine-tuning defaults carried by the training contract. Only the
// contract is pinned here; what a backend does with the ranks is its own
// business.
struct AdapterConfig {
    int rank = 8;
    double alpha = 16.0;
    double dropout = 0.05;
    double lr = 3e-4;
};

// Encoder exposing per-token hidden states plus a reverse-mode hook, so a
// trainer can push dL/d(hidden) back into whatever parameters the backend
// declares trainable.
class TokenizedEncoderBackend : public EmbeddingBackend {
public:
    virtual std::vector<Token> tokenize(const std::string& text) const = 0;

    // Shape (tokens.size(), dim()).
    virtual Mat hidden_states(const std::vector<Token>& tokens) const = 0;

    // Training contract; backends with nothing to train return {} / ignore.
    virtual std::vector<ParamBlock> trainable_params() { return {}; }
    virtual void accumulate_hidden_grad(const std::vector<Token>& tokens, const Mat& hidden_grad) {
        (void)tokens;
        (void)hidden_grad;
    }

    // Sequence-level embedding: mean over token hidden states.
    Mat encode(const std::vector<std::string>& texts) const override {
        if (texts.empty()) fail("EmptyInput", "encode called with no texts");
        Mat out;
        for (const auto& text : texts) {
            auto toks = tokenize(text);
            if (toks.empty()) {
                out.emplace_back(static_cast<size_t>(dim()), 0.0);
                continue;
            }
            auto hidden = hidden_states(toks);
            Vec mean(static_cast<size_t>(dim()), 0.0);
            for (const auto& row : hidden)
                for (size_t i = 0; i < mean.size(); ++i) mean[i] += row[i];
            for (auto& x : mean) x /= static_cast<double>(hidden.size());
            out.push_back(std::move(mean));
        }
        return out;
    }
};

// Word-level stub: token t is word t, hidden state is a one-hot at the word's
// hash bucket, optionally scaled by a trainable per-dimension vector (the
// desk-scale stand-in for adapter weights). Long words can be split into
// subword pieces to exercise span->token expansion.
class StubTokenizedEncoder : public TokenizedEncoderBackend {
public:
    struct Options {
        int dim = 64;
        int max_length = 4096;
        size_t subword_max_chars = 0;  // 0 = never split words
        bool trainable_scale = false;
    };

    StubTokenizedEncoder() : StubTokenizedEncoder(Options()) {}

    explicit StubTokenizedEncoder(Options opts)
        : opts_(opts),
          scale_(static_cast<size_t>(opts.dim), 1.0),
          scale_grad_(static_cast<size_t>(opts.dim), 0.0) {}

    std::string model_id() const override {
        return "stub-onehot-d" + std::to_string(opts_.dim) + (opts_.trainable_scale ? "-scaled" : "");
    }
    int dim() const override { return opts_.dim; }
    int max_length() const override { return opts_.max_length; }

    std::vector<Token> tokenize(const std::string& text) const override {
        std::vector<Token> out;
        auto words = split_words(text);
        for (size_t w = 0; w < words.size(); ++w) {
            const std::string& word = words[w];
            if (opts_.subword_max_chars == 0 || word.size() <= opts_.subword_max_chars) {
                out.push_back(Token{word, static_cast<int>(w), static_cast<int>(w)});
            } else {
                for (size_t off = 0; off < word.size(); off += opts_.subword_max_chars)
                    out.push_back(Token{word.substr(off, opts_.subword_max_chars), static_cast<int>(w),
                                        static_cast<int>(w)});
            }
            if (out.size() >= static_cast<size_t>(opts_.max_length)) break;
        }
        return out;
    }

    Mat hidden_states(const std::vector<Token>& tokens) const override {
        Mat hidden(tokens.size(), Vec(static_cast<size_t>(opts_.dim), 0.0));
        for (size_t t = 0; t < tokens.size(); ++t) {
            const size_t bucket = bucket_of(tokens[t].piece);
            hidden[t][bucket] = opts_.trainable_scale ? scale_[bucket] : 1.0;
        }
        return hidden;
    }

    std::vector<ParamBlock> trainable_params() override {
        if (!opts_.trainable_scale) return {};
        return {ParamBlock{"encoder.scale", &scale_, &scale_grad_}};
    }

    void accumulate_hidden_grad(const std::vector<Token>& tokens, const Mat& hidden_grad) override {
        if (!opts_.trainable_scale) return;
        for (size_t t = 0; t < tokens.size(); ++t)
            scale_grad_[bucket_of(tokens[t].piece)] += hidden_grad[t][bucket_of(tokens[t].piece)];
    }

    size_t bucket_of(const std::string& piece) const {
        return fnv1a64(lowercase(piece)) % static_cast<uint64_t>(opts_.dim);
    }

private:
    Options opts_;
    Vec scale_;
    Vec scale_grad_;
};

// ---------------------------------------------------------------------------
// Hosted language-model clients
// ---------------------------------------------------------------------------

struct RequestPolicy {
    int timeout_ms = 30000;
    int max_retries = 3;
    int max_in_flight = 4;
    int backoff_base_ms = 50;
};

class LLMClient {
public:
    virtual ~LLMClient() = default;
    virtual std::string model_id() const = 0;
    virtual int max_context_tokens() const = 0;
    virtual std::string complete(const std::string& prompt) = 0;
};

// Scripted stand-in: first matching substring rule wins, else the default
// response. Optionally fails the first N calls to exercise retry paths.
class ScriptedLLMClient : public LLMClient {
public:
    struct Rule {
        std::string needle;
        std::string response;
    };

    ScriptedLLMClient(std::vector<Rule> rules, std::string default_response = "",
                      int max_context = 1 << 20)
        : rules_(std::move(rules)), default_(std::move(default_response)), max_context_(max_context) {}

    explicit ScriptedLLMClient(std::function<std::string(const std::string&)> fn, int max_context = 1 << 20)
        : fn_(std::move(fn)), max_context_(max_context) {}

    std::string model_id() const override { return "scripted"; }
    int max_context_tokens() const override { return max_context_; }

    std::string complete(const std::string& prompt) override {
        calls_.fetch_add(1);
        if (fail_first_ > 0) {
            --fail_first_;
            throw Error("BackendUnavailable", "scripted transient failure");
        }
        if (fn_) return fn_(prompt);
        for (const auto& rule : rules_)
            if (contains(prompt, rule.needle)) return rule.response;
        return default_;
    }

    int calls() const { return calls_.load(); }
    void fail_first(int n) { fail_first_ = n; }

private:
    std::vector<Rule> rules_;
    std::function<std::string(const std::string&)> fn_;
    std::string default_;
    int max_context_;
    std::atomic<int> calls_{0};
    int fail_first_ = 0;
};

struct CacheStats {
    int hits = 0;
    int misses = 0;
};

// Content-addressed request cache: {sha256(prompt)}.json holding
// {prompt, response, model_id, timestamp}. A warm cache replays a whole
// experiment without touching the network; keys are write-once so concurrent
// writers are safe. With no inner client ("replay mode") a miss is an error.
class CachingLLMClient : public LLMClient {
public:
    CachingLLMClient(std::shared_ptr<LLMClient> inner, std::filesystem::path cache_dir,
                     std::shared_ptr<TokenizerRef> tokenizer, RequestPolicy policy = {})
        : inner_(std::move(inner)),
          cache_dir_(std::move(cache_dir)),
          tokenizer_(std::move(tokenizer)),
          policy_(policy) {
        std::filesystem::create_directories(cache_dir_);
    }

    std::string model_id() const override { return inner_ ? inner_->model_id() : "replay"; }
    int max_context_tokens() const override { return inner_ ? inner_->max_context_tokens() : (1 << 20); }

    std::string complete(const std::string& prompt) override {
        if (tokenizer_ && static_cast<int>(tokenizer_->count(prompt)) > max_context_tokens())
            fail("ContextOverflow", "prompt of " + std::to_string(tokenizer_->count(prompt)) +
                                        " tokens exceeds context of " +
                                        std::to_string(max_context_tokens()));

        const std::string key = sha256_hex(prompt);
        const auto path = cache_dir_ / (key + ".json");
        if (std::filesystem::exists(path)) {
            std::ifstream in(path);
            nlohmann::json j = nlohmann::json::parse(in);
            {
                std::lock_guard<std::mutex> lock(mutex_);
                ++stats_.hits;
            }
            return j.at("response").get<std::string>();
        }
        if (!inner_)
            fail("BackendUnavailable", "cache miss in replay mode for key " + key);

        std::string response;
        int attempt = 0;
        for (;;) {
            try {
                response = inner_->complete(prompt);
                break;
            } catch (const std::exception& e) {
                ++attempt;
                if (attempt > policy_.max_retries)
                    fail("BackendUnavailable", std::string("request failed after ") +
                                                   std::to_string(attempt) + " attempts: " + e.what());
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(policy_.backoff_base_ms * (1 << (attempt - 1))));
            }
        }

        nlohmann::json j{{"prompt", prompt},
                         {"response", response},
                         {"model_id", model_id()},
                         {"timestamp", now_iso8601()}};
        // write-once: temp file + rename, losers of the race just lose
        const auto tmp = cache_dir_ / (key + ".tmp." + std::to_string(splitmix64(fnv1a64(key))));
        {
            std::ofstream out(tmp);
            out << j.dump(2) << '\n';
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) std::filesystem::remove(tmp, ec);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++stats_.misses;
        }
        return response;
    }

    CacheStats stats() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return stats_;
    }

    const std::filesystem::path& cache_dir() const { return cache_dir_; }

private:
    static std::string now_iso8601() {
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
        return buf;
    }

    std::shared_ptr<LLMClient> inner_;
    std::filesystem::path cache_dir_;
    std::shared_ptr<TokenizerRef> tokenizer_;
    RequestPolicy policy_;
    mutable std::mutex mutex_;
    CacheStats stats_;
};

// Run fn(0..n-1) with at most max_in_flight worker threads; first exception
// wins and is rethrown after all workers finish.
inline void parallel_for_bounded(size_t n, int max_in_flight, const std::function<void(size_t)>& fn) {
    const size_t workers = std::min<size_t>(std::max(1, max_in_flight), n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace recap
