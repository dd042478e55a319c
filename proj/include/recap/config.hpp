#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/errors.hpp"
#include "recap/hash.hpp"

namespace recap {

struct SubsetConfig {
    std::string id;
    std::string kind = "book";  // "book" | "tv"
    std::string language = "en";
    std::string raw_path;          // book: raw text file
    std::string annotations_path;  // book: optional human annotations (.jsonl / .csv)
    std::string alias_path;        // optional alias table JSON {canonical: [aliases...]}
    std::string synopsis_path;     // tv: synopsis dump JSONL
    std::string production_type = "TV shows";  // "Animes" for animated productions
};

// One declarative file drives an experiment; command-line flags override
// individual fields. The sha256 of the canonical JSON form is stamped into
// every derived artifact.
struct ExperimentConfig {
    uint64_t seed = 1;
    std::string method = "closest5";
    std::string policy = "top5";
    std::optional<double> threshold;  // required by the free_threshold policy
    std::vector<int> bands = {20, 40, 60};
    std::string output_dir = "out";

    // encoders
    std::string backend = "hashed-bow";  // "hashed-bow" | "stub-onehot"
    int backend_dim = 64;
    std::string tokenizer = "whitespace-v1";

    // snippeting
    int w = 7;
    int w_c = 6;
    int sample_budget = 40;
    int main_character_min_count = 100;

    // ranking
    bool char_filter = false;
    bool event_prefix = true;

    // hosted-model methods
    int k_filter = 15;
    std::string templates_dir;        // empty = built-in wording
    std::string cache_dir;            // empty = <output_dir>/cache
    std::string scripted_responses;   // offline stand-in rules (JSON)
    std::string credential_env = "RECAP_LLM_CREDENTIAL";
    std::string llm_endpoint;  // empty = no network client (cache/scripted only)
    std::string llm_model = "hosted-default";

    // supervised fine-tuning
    double alpha = 0.0;
    double lr = 2e-5;
    int epochs = 10;
    int batch = 32;
    int max_length = 256;
    std::string sampler = "standard";  // "standard" | "weighted_oversample"

    // line2note
    std::string notes_path;
    std::string checkpoint_dir;  // empty = <output_dir>/l2n
    int l2n_epochs = 2;
    double l2n_lr = 3e-5;
    int l2n_batch = 20;
    int l2n_eval_batch = 12;
    int min_line_len = 64;

    std::vector<SubsetConfig> subsets;
};

inline const std::set<std::string>& known_methods() {
    static const std::set<std::string> methods{"closest5",      "embed_zero",  "embed_charfilter",
                                               "l2n",           "supervised_pw", "llm_listwise",
                                               "llm_listwise_free", "llm_pairwise", "pipeline"};
    return methods;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json subsets = nlohmann::json::array();
    for (const auto& s : c.subsets)
        subsets.push_back({{"id", s.id},
                           {"kind", s.kind},
                           {"language", s.language},
                           {"raw_path", s.raw_path},
                           {"annotations_path", s.annotations_path},
                           {"alias_path", s.alias_path},
                           {"synopsis_path", s.synopsis_path},
                           {"production_type", s.production_type}});
    nlohmann::json j{{"seed", c.seed},
                     {"method", c.method},
                     {"policy", c.policy},
                     {"bands", c.bands},
                     {"output_dir", c.output_dir},
                     {"backend", c.backend},
                     {"backend_dim", c.backend_dim},
                     {"tokenizer", c.tokenizer},
                     {"w", c.w},
                     {"w_c", c.w_c},
                     {"sample_budget", c.sample_budget},
                     {"main_character_min_count", c.main_character_min_count},
                     {"char_filter", c.char_filter},
                     {"event_prefix", c.event_prefix},
                     {"k_filter", c.k_filter},
                     {"templates_dir", c.templates_dir},
                     {"cache_dir", c.cache_dir},
                     {"scripted_responses", c.scripted_responses},
                     {"credential_env", c.credential_env},
                     {"llm_endpoint", c.llm_endpoint},
                     {"llm_model", c.llm_model},
                     {"alpha", c.alpha},
                     {"lr", c.lr},
                     {"epochs", c.epochs},
                     {"batch", c.batch},
                     {"max_length", c.max_length},
                     {"sampler", c.sampler},
                     {"notes_path", c.notes_path},
                     {"checkpoint_dir", c.checkpoint_dir},
                     {"l2n_epochs", c.l2n_epochs},
                     {"l2n_lr", c.l2n_lr},
                     {"l2n_batch", c.l2n_batch},
                     {"l2n_eval_batch", c.l2n_eval_batch},
                     {"min_line_len", c.min_line_len},
                     {"subsets", subsets}};
    if (c.threshold) j["threshold"] = *c.threshold;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("seed", c.seed);
    opt("method", c.method);
    opt("policy", c.policy);
    if (j.contains("threshold") && !j.at("threshold").is_null()) c.threshold = j.at("threshold").get<double>();
    opt("bands", c.bands);
    opt("output_dir", c.output_dir);
    opt("backend", c.backend);
    opt("backend_dim", c.backend_dim);
    opt("tokenizer", c.tokenizer);
    opt("w", c.w);
    opt("w_c", c.w_c);
    opt("sample_budget", c.sample_budget);
    opt("main_character_min_count", c.main_character_min_count);
    opt("char_filter", c.char_filter);
    opt("event_prefix", c.event_prefix);
    opt("k_filter", c.k_filter);
    opt("templates_dir", c.templates_dir);
    opt("cache_dir", c.cache_dir);
    opt("scripted_responses", c.scripted_responses);
    opt("credential_env", c.credential_env);
    opt("llm_endpoint", c.llm_endpoint);
    opt("llm_model", c.llm_model);
    opt("alpha", c.alpha);
    opt("lr", c.lr);
    opt("epochs", c.epochs);
    opt("batch", c.batch);
    opt("max_length", c.max_length);
    opt("sampler", c.sampler);
    opt("notes_path", c.notes_path);
    opt("checkpoint_dir", c.checkpoint_dir);
    opt("l2n_epochs", c.l2n_epochs);
    opt("l2n_lr", c.l2n_lr);
    opt("l2n_batch", c.l2n_batch);
    opt("l2n_eval_batch", c.l2n_eval_batch);
    opt("min_line_len", c.min_line_len);
    if (j.contains("subsets")) {
        for (const auto& sj : j.at("subsets")) {
            SubsetConfig s;
            auto sopt = [&](const char* key, auto& field) {
                if (sj.contains(key)) field = sj.at(key).get<std::decay_t<decltype(field)>>();
            };
            sopt("id", s.id);
            sopt("kind", s.kind);
            sopt("language", s.language);
            sopt("raw_path", s.raw_path);
            sopt("annotations_path", s.annotations_path);
            sopt("alias_path", s.alias_path);
            sopt("synopsis_path", s.synopsis_path);
            sopt("production_type", s.production_type);
            c.subsets.push_back(std::move(s));
        }
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("ConfigError", "cannot read config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
        fail("ConfigError", std::string("config parse: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail("ConfigError", std::string("config fields: ") + e.what());
    }
}

// nlohmann::json keeps object keys sorted, so this hash is stable for
// identical configurations regardless of field order in the source file.
inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(config_to_json(c).dump()); }

inline void validate_config(const ExperimentConfig& c) {
    if (!known_methods().count(c.method)) fail("ConfigError", "unknown method '" + c.method + "'");
    if (c.policy != "top5" && c.policy != "free_threshold" && c.policy != "closest5")
        fail("ConfigError", "unknown policy '" + c.policy + "'");
    if (c.policy == "free_threshold" && !c.threshold)
        fail("ConfigError", "policy free_threshold requires a threshold");
    if (c.subsets.empty()) fail("ConfigError", "config lists no subsets");
    std::set<std::string> seen;
    for (const auto& s : c.subsets) {
        if (s.id.empty()) fail("ConfigError", "subset with empty id");
        if (!seen.insert(s.id).second) fail("ConfigError", "duplicate subset id '" + s.id + "'");
        if (s.kind != "book" && s.kind != "tv")
            fail("ConfigError", "subset '" + s.id + "': unknown kind '" + s.kind + "'");
        for (const std::string* path : {&s.raw_path, &s.annotations_path, &s.alias_path, &s.synopsis_path})
            if (!path->empty() && !std::filesystem::exists(*path))
                fail("ConfigError", "subset '" + s.id + "': missing file " + *path);
        if (s.kind == "book" && s.raw_path.empty())
            fail("ConfigError", "book subset '" + s.id + "' needs raw_path");
        if (s.kind == "tv" && s.synopsis_path.empty())
            fail("ConfigError", "tv subset '" + s.id + "' needs synopsis_path");
    }
    for (const std::string* path : {&c.scripted_responses, &c.notes_path, &c.templates_dir})
        if (!path->empty() && !std::filesystem::exists(*path))
            fail("ConfigError", "missing file " + *path);
    if (c.w < 1 || c.w_c < 1) fail("ConfigError", "w and w_c must be positive");
    for (int b : c.bands)
        if (b <= 0 || b > 60) fail("ConfigError", "band " + std::to_string(b) + " outside (0, 60]");
}

}  // namespace recap
