// recap — experiment driver for the recap-snippet benchmark.
//
//   recap build  --config exp.json            ingest + snippet + label
//   recap run    --config exp.json            score, predict, report
//   recap check  [--triples extra.json]       metric self-test
//   recap report --config exp.json            re-score stored predictions
//
// Exit codes: 0 ok, 1 metric violation, 2 configuration error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "recap/recap.hpp"

namespace {

struct Overrides {
    std::optional<std::string> method, policy, backend, output_dir, templates_dir, cache_dir,
        scripted_responses, llm_endpoint, llm_model, notes_path, checkpoint_dir, tokenizer;
    std::optional<double> threshold;
    std::optional<uint64_t> seed;
    std::optional<int> k_filter;
    std::optional<bool> char_filter;
    std::vector<int> bands;
};

void add_overrides(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--method", ov.method, "scoring method (overrides config)");
    cmd->add_option("--policy", ov.policy, "selection policy: top5 | free_threshold | closest5");
    cmd->add_option("--threshold", ov.threshold, "free-mode selection threshold");
    cmd->add_option("--seed", ov.seed, "root seed");
    cmd->add_option("--output-dir", ov.output_dir, "artifact directory");
    cmd->add_option("--backend", ov.backend, "embedding backend id");
    cmd->add_option("--tokenizer", ov.tokenizer, "reference tokenizer id");
    cmd->add_option("--k-filter", ov.k_filter, "pipeline first-stage cutoff");
    cmd->add_option("--char-filter", ov.char_filter, "restrict candidates to character mentions");
    cmd->add_option("--templates", ov.templates_dir, "prompt template directory");
    cmd->add_option("--cache-dir", ov.cache_dir, "model response cache directory");
    cmd->add_option("--scripted", ov.scripted_responses, "scripted model responses (JSON rules)");
    cmd->add_option("--endpoint", ov.llm_endpoint, "hosted model endpoint URL");
    cmd->add_option("--model", ov.llm_model, "hosted model id");
    cmd->add_option("--notes", ov.notes_path, "note corpus JSONL for embedder training");
    cmd->add_option("--checkpoint-dir", ov.checkpoint_dir, "trained embedder checkpoint directory");
    cmd->add_option("--bands", ov.bands, "distance bands for the banded report");
}

recap::ExperimentConfig load_with_overrides(const std::string& config_path, const Overrides& ov) {
    recap::ExperimentConfig cfg = recap::load_config(config_path);
    if (ov.method) cfg.method = *ov.method;
    if (ov.policy) cfg.policy = *ov.policy;
    if (ov.threshold) cfg.threshold = *ov.threshold;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.output_dir) cfg.output_dir = *ov.output_dir;
    if (ov.backend) cfg.backend = *ov.backend;
    if (ov.tokenizer) cfg.tokenizer = *ov.tokenizer;
    if (ov.k_filter) cfg.k_filter = *ov.k_filter;
    if (ov.char_filter) cfg.char_filter = *ov.char_filter;
    if (ov.templates_dir) cfg.templates_dir = *ov.templates_dir;
    if (ov.cache_dir) cfg.cache_dir = *ov.cache_dir;
    if (ov.scripted_responses) cfg.scripted_responses = *ov.scripted_responses;
    if (ov.llm_endpoint) cfg.llm_endpoint = *ov.llm_endpoint;
    if (ov.llm_model) cfg.llm_model = *ov.llm_model;
    if (ov.notes_path) cfg.notes_path = *ov.notes_path;
    if (ov.checkpoint_dir) cfg.checkpoint_dir = *ov.checkpoint_dir;
    if (!ov.bands.empty()) cfg.bands = ov.bands;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recap-snippet experiment driver"};
    app.require_subcommand(1);

    std::string config_path;
    std::string triples_path;
    Overrides ov;

    auto* build = app.add_subcommand("build", "ingest raw text and write instance files");
    build->add_option("--config", config_path, "experiment config JSON")->required();
    add_overrides(build, ov);

    auto* run = app.add_subcommand("run", "run the configured method and write predictions + report");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    add_overrides(run, ov);

    auto* check = app.add_subcommand("check", "recompute shipped metric reference points");
    check->add_option("--triples", triples_path, "extra (recall, precision, f1) triples, JSON array");

    auto* report = app.add_subcommand("report", "re-score stored predictions");
    report->add_option("--config", config_path, "experiment config JSON")->required();
    add_overrides(report, ov);

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) return recap::cmd_build(load_with_overrides(config_path, ov));
        if (run->parsed()) return recap::cmd_run(load_with_overrides(config_path, ov));
        if (check->parsed()) return recap::cmd_check(triples_path);
        if (report->parsed()) return recap::cmd_report(load_with_overrides(config_path, ov));
    } catch (const recap::Error& e) {
        std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
