#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "recap/backends.hpp"
#include "recap/errors.hpp"
#include "recap/ranking.hpp"
#include "recap/snippet.hpp"
#include "recap/tokenizer.hpp"

namespace recap {

// ---------------------------------------------------------------------------
// Prompt specs and templates
// ---------------------------------------------------------------------------

enum class PromptMode { listwise_top5, listwise_free, pairwise };
enum class MediaKind { book, tv };

inline std::string to_string(PromptMode m) {
    switch (m) {
        case PromptMode::listwise_top5: return "listwise_top5";
        case PromptMode::listwise_free: return "listwise_free";
        case PromptMode::pairwise: return "pairwise";
    }
    fail("SchemaViolation", "bad prompt mode");
}

inline PromptMode prompt_mode_from_string(const std::string& s) {
    if (s == "listwise_top5") return PromptMode::listwise_top5;
    if (s == "listwise_free") return PromptMode::listwise_free;
    if (s == "pairwise") return PromptMode::pairwise;
    fail("SchemaViolation", "unknown prompt mode '" + s + "'");
}

struct PromptSpec {
    PromptMode mode = PromptMode::listwise_top5;
    MediaKind media = MediaKind::book;
    std::string production_type = "TV shows";  // "Animes" for animated productions
    int trigger_tokens = 15000;   // full renders above this cap every candidate
    int per_candidate_cap = 220;  // tokens per candidate once the cap engages
    int max_context_tokens = 1 << 20;  // hard ceiling after truncation
    bool event_prefix = true;
};

inline std::string template_name(PromptMode mode, MediaKind media) {
    return to_string(mode) + (media == MediaKind::tv ? "_tv" : "_book");
}

struct TemplateSet {
    std::map<std::string, std::string> by_name;

    const std::string& get(PromptMode mode, MediaKind media) const {
        const auto name = template_name(mode, media);
        auto it = by_name.find(name);
        if (it == by_name.end()) fail("SchemaViolation", "no prompt template named '" + name + "'");
        return it->second;
    }
};

// Wording ships as data so prompt edits never touch logic; these strings are
// the in-tree defaults mirrored by the templates/ directory.
inline TemplateSet builtin_templates() {
    TemplateSet t;
    t.by_name["listwise_top5_book"] =
        "You are reading a book. The current passage is the TARGET snippet below. Earlier passages\n"
        "from the same book are listed as candidate snippets, numbered by distance (smaller = closer).\n"
        "\n"
        "Target snippet:\n{target}\n"
        "\n"
        "Candidate snippets:\n{candidates}\n"
        "\n"
        "A recap snippet is an earlier snippet with a direct temporal or causal plot connection to the\n"
        "target snippet, reachable in one reasoning hop. Pick up to 5 candidate snippets providing the\n"
        "most relevant background for the target and explain the reasons.\n"
        "Answer with the snippet numbers, e.g. \"Snippets 3, 7 and 12\".\n";
    t.by_name["listwise_free_book"] =
        "You are reading a book. The current passage is the TARGET snippet below. Earlier passages\n"
        "from the same book are listed as candidate snippets, numbered by distance (smaller = closer).\n"
        "\n"
        "Target snippet:\n{target}\n"
        "\n"
        "Candidate snippets:\n{candidates}\n"
        "\n"
        "A recap snippet is an earlier snippet with a direct temporal or causal plot connection to the\n"
        "target snippet, reachable in one reasoning hop. List every candidate snippet you believe is a\n"
        "recap snippet (at most 5, possibly none) and explain the reasons.\n"
        "Answer with the snippet numbers, e.g. \"Snippets 3, 7 and 12\", or \"None\".\n";
    t.by_name["pairwise_book"] =
        "You are reading a book. Below are an earlier CANDIDATE snippet and the current TARGET snippet.\n"
        "\n"
        "Candidate snippet:\n{candidate}\n"
        "\n"
        "Target snippet:\n{target}\n"
        "\n"
        "Does the candidate snippet qualify as a recap snippet of the target — an earlier passage with\n"
        "a direct temporal or causal plot connection, reachable in one reasoning hop? Answer \"Yes\" or\n"
        "\"No\", then explain the reason.\n";
    t.by_name["listwise_top5_tv"] =
        "You are reading plot synopses of {production_type}. The current paragraph is the TARGET below.\n"
        "Earlier synopsis paragraphs are listed as candidate snippets, numbered by distance\n"
        "(smaller = closer).\n"
        "\n"
        "Target snippet:\n{target}\n"
        "\n"
        "Candidate snippets:\n{candidates}\n"
        "\n"
        "A recap snippet is an earlier paragraph with a direct temporal or causal plot connection to the\n"
        "target, reachable in one reasoning hop. Pick up to 5 candidate snippets providing the most\n"
        "relevant background for the target and explain the reasons.\n"
        "Answer with the snippet numbers, e.g. \"Snippets 3, 7 and 12\".\n";
    t.by_name["listwise_free_tv"] =
        "You are reading plot synopses of {production_type}. The current paragraph is the TARGET below.\n"
        "Earlier synopsis paragraphs are listed as candidate snippets, numbered by distance\n"
        "(smaller = closer).\n"
        "\n"
        "Target snippet:\n{target}\n"
        "\n"
        "Candidate snippets:\n{candidates}\n"
        "\n"
        "A recap snippet is an earlier paragraph with a direct temporal or causal plot connection to the\n"
        "target, reachable in one reasoning hop. List every candidate snippet you believe is a recap\n"
        "snippet (at most 5, possibly none) and explain the reasons.\n"
        "Answer with the snippet numbers, e.g. \"Snippets 3, 7 and 12\", or \"None\".\n";
    t.by_name["pairwise_tv"] =
        "You are reading plot synopses of {production_type}. Below are an earlier CANDIDATE paragraph\n"
        "and the current TARGET paragraph.\n"
        "\n"
        "Candidate snippet:\n{candidate}\n"
        "\n"
        "Target snippet:\n{target}\n"
        "\n"
        "Does the candidate qualify as a recap snippet of the target — an earlier paragraph with a\n"
        "direct temporal or causal plot connection, reachable in one reasoning hop? Answer \"Yes\" or\n"
        "\"No\", then explain the reason.\n";
    return t;
}

inline TemplateSet load_templates(const std::filesystem::path& dir) {
    TemplateSet t;
    for (PromptMode mode : {PromptMode::listwise_top5, PromptMode::listwise_free, PromptMode::pairwise}) {
        for (MediaKind media : {MediaKind::book, MediaKind::tv}) {
            const auto name = template_name(mode, media);
            std::ifstream in(dir / (name + ".txt"));
            if (!in) fail("SchemaViolation", "missing template file " + (dir / (name + ".txt")).string());
            std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            t.by_name[name] = std::move(text);
        }
    }
    return t;
}

inline std::string render_template(std::string tmpl, const std::map<std::string, std::string>& vars) {
    for (const auto& [key, value] : vars) {
        const std::string needle = "{" + key + "}";
        size_t pos = 0;
        while ((pos = tmpl.find(needle, pos)) != std::string::npos) {
            tmpl.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string candidate_block(const TargetInstance& instance, const std::set<int>& admissible,
                                   const TokenizerRef& tokenizer, int cap_tokens) {
    std::string block;
    for (const auto& cand : instance.candidates) {
        const int idx = *cand.cand_index;
        if (!admissible.count(idx)) continue;
        std::string text = cand.text;
        if (cap_tokens > 0 && static_cast<int>(tokenizer.count(text)) > cap_tokens)
            text = tokenizer.take(text, static_cast<size_t>(cap_tokens));
        block += "Snippet " + std::to_string(idx) + ": " + text + "\n";
    }
    return block;
}

}  // namespace detail

// Candidates are listed nearest-first with their stable indices. Truncation
// engages only when the uncapped render exceeds trigger_tokens, in which
// case every candidate is capped at per_candidate_cap tokens.
inline std::string render_listwise(const TargetInstance& instance, const std::set<int>& admissible,
                                   const PromptSpec& spec, const TemplateSet& templates,
                                   const TokenizerRef& tokenizer) {
    const std::string& tmpl = templates.get(spec.mode, spec.media);
    const std::string target = target_encode_text(instance, spec.event_prefix);
    auto render = [&](int cap) {
        return render_template(tmpl, {{"target", target},
                                      {"candidates", detail::candidate_block(instance, admissible, tokenizer, cap)},
                                      {"production_type", spec.production_type}});
    };
    std::string prompt = render(0);
    if (static_cast<int>(tokenizer.count(prompt)) > spec.trigger_tokens)
        prompt = render(spec.per_candidate_cap);
    if (static_cast<int>(tokenizer.count(prompt)) > spec.max_context_tokens)
        fail("ContextOverflow", "prompt still exceeds " + std::to_string(spec.max_context_tokens) +
                                    " tokens after candidate truncation");
    return prompt;
}

inline std::string render_pairwise(const TargetInstance& instance, const Snippet& candidate,
                                   const PromptSpec& spec, const TemplateSet& templates,
                                   const TokenizerRef& tokenizer) {
    const std::string& tmpl = templates.get(PromptMode::pairwise, spec.media);
    std::string cand_text = candidate.text;
    if (static_cast<int>(tokenizer.count(cand_text)) > spec.per_candidate_cap)
        cand_text = tokenizer.take(cand_text, static_cast<size_t>(spec.per_candidate_cap));
    std::string prompt = render_template(tmpl, {{"target", target_encode_text(instance, spec.event_prefix)},
                                                {"candidate", cand_text},
                                                {"production_type", spec.production_type}});
    if (static_cast<int>(tokenizer.count(prompt)) > spec.max_context_tokens)
        fail("ContextOverflow", "pairwise prompt exceeds the context limit");
    return prompt;
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

struct ParsedVerdict {
    std::vector<int> indices;  // listwise selections, first-mention order
    bool is_recap = false;     // pairwise answer
    std::string reason;
    bool unparseable = false;
    std::vector<std::string> warnings;
};

namespace detail {

// All non-negative integers in the response, each tagged with whether a
// nearby preceding word anchors it to a snippet label.
struct FoundInt {
    int value;
    bool anchored;
};

inline std::vector<FoundInt> scan_integers(const std::string& response) {
    std::vector<FoundInt> out;
    std::string last_word;
    size_t i = 0;
    int words_since_anchor = 1000;
    while (i < response.size()) {
        const unsigned char c = static_cast<unsigned char>(response[i]);
        if (std::isdigit(c)) {
            size_t j = i;
            while (j < response.size() && std::isdigit(static_cast<unsigned char>(response[j]))) ++j;
            // snippet labels are small; very long digit runs are not labels
            if (j - i <= 4) {
                const bool anchored = words_since_anchor <= 6;  // "Snippets 3, 7 and 12"
                out.push_back(FoundInt{std::stoi(response.substr(i, j - i)), anchored});
            }
            i = j;
        } else if (std::isalpha(c) || c == '#') {
            size_t j = i;
            while (j < response.size() &&
                   (std::isalpha(static_cast<unsigned char>(response[j])) || response[j] == '#'))
                ++j;
            std::string word = lowercase(response.substr(i, j - i));
            if (word.rfind("snippet", 0) == 0 || word.rfind("#", 0) == 0 || word.rfind("candidate", 0) == 0 ||
                word.rfind("paragraph", 0) == 0)
                words_since_anchor = 0;
            else if (word == "and" || word == "or")
                ;  // connectors inside a label list don't break the anchor
            else
                ++words_since_anchor;
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

}  // namespace detail

// Tolerant listwise extraction: prefer integers anchored to a "Snippet N"
// style mention, fall back to any integers; dedupe preserving first mention,
// drop anything out of range or inadmissible (warned), keep at most 5. A
// response with no usable integers yields an empty flagged verdict — it
// never throws, so one bad response cannot abort a batch.
inline ParsedVerdict parse_listwise(const std::string& response, const std::set<int>& admissible) {
    ParsedVerdict v;
    v.reason = trim(response);
    const auto found = detail::scan_integers(response);
    bool any_anchored = false;
    for (const auto& f : found) any_anchored |= f.anchored;

    std::set<int> seen;
    for (const auto& f : found) {
        if (any_anchored && !f.anchored) continue;
        if (f.value < 0 || f.value >= kNumCandidates) {
            v.warnings.push_back("dropped out-of-range label " + std::to_string(f.value));
            continue;
        }
        if (!admissible.count(f.value)) {
            v.warnings.push_back("dropped inadmissible label " + std::to_string(f.value));
            continue;
        }
        if (!seen.insert(f.value).second) continue;
        if (v.indices.size() >= 5) {
            v.warnings.push_back("truncated selection to 5 labels");
            break;
        }
        v.indices.push_back(f.value);
    }
    if (found.empty()) {
        // an explicit "none" is a parseable empty selection, not a failure
        const std::string lower = lowercase(response);
        if (!contains(lower, "none")) v.unparseable = true;
    }
    return v;
}

// First standalone yes/no wins; anything else is a flagged non-recap.
inline ParsedVerdict parse_pairwise(const std::string& response) {
    ParsedVerdict v;
    v.reason = trim(response);
    const std::string lower = lowercase(response);
    size_t i = 0;
    while (i < lower.size()) {
        if (!std::isalpha(static_cast<unsigned char>(lower[i]))) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < lower.size() && std::isalpha(static_cast<unsigned char>(lower[j]))) ++j;
        const std::string word = lower.substr(i, j - i);
        if (word == "yes") {
            v.is_recap = true;
            return v;
        }
        if (word == "no") {
            v.is_recap = false;
            return v;
        }
        i = j;
    }
    v.unparseable = true;
    v.is_recap = false;
    return v;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct VerdictRecord {
    std::string target_uid;
    PromptMode mode = PromptMode::pairwise;
    int cand_index = -1;  // -1 for listwise records
    ParsedVerdict verdict;
};

inline nlohmann::json verdict_to_json(const VerdictRecord& r) {
    nlohmann::json j{{"target_uid", r.target_uid},
                     {"mode", to_string(r.mode)},
                     {"cand_index", r.cand_index},
                     {"indices", r.verdict.indices},
                     {"is_recap", r.verdict.is_recap},
                     {"unparseable", r.verdict.unparseable},
                     {"warnings", r.verdict.warnings}};
    return j;
}

struct LlmRunResult {
    RankedPrediction prediction;
    std::vector<VerdictRecord> verdicts;
    int requests = 0;
};

// One request for the whole candidate list.
inline LlmRunResult run_listwise(const TargetInstance& instance, LLMClient& client,
                                 const std::set<int>& admissible, const PromptSpec& spec,
                                 const TemplateSet& templates, const TokenizerRef& tokenizer) {
    if (admissible.empty()) fail("SchemaViolation", "run_listwise needs a non-empty admissible set");
    const std::string prompt = render_listwise(instance, admissible, spec, templates, tokenizer);
    const std::string response = client.complete(prompt);
    ParsedVerdict verdict = parse_listwise(response, admissible);

    LlmRunResult result;
    result.requests = 1;
    result.prediction.target_uid = instance.target_uid;
    result.prediction.policy =
        spec.mode == PromptMode::listwise_free ? Policy::free_threshold : Policy::top5;
    result.prediction.scores.assign(instance.candidates.size(), kInadmissible);
    for (size_t k = 0; k < instance.candidates.size(); ++k)
        if (admissible.count(*instance.candidates[k].cand_index))
            result.prediction.scores[k] = -static_cast<double>(k);  // unselected: distance order
    for (size_t pos = 0; pos < verdict.indices.size(); ++pos)
        result.prediction.scores[static_cast<size_t>(verdict.indices[pos])] =
            1000.0 - static_cast<double>(pos);
    result.prediction.selected = verdict.indices;
    if (verdict.unparseable) result.prediction.flags.push_back("unparseable_response");
    result.verdicts.push_back(VerdictRecord{instance.target_uid, spec.mode, -1, std::move(verdict)});
    return result;
}

namespace detail {

// Shared tail of the pairwise runners: probe each listed candidate with one
// request, keep the 5 positives nearest the target, pad from pad_order.
inline LlmRunResult pairwise_over(const TargetInstance& instance, LLMClient& client,
                                  const std::vector<int>& probe_order, const std::vector<int>& pad_order,
                                  const PromptSpec& spec, const TemplateSet& templates,
                                  const TokenizerRef& tokenizer,
                                  std::vector<double> base_scores) {
    LlmRunResult result;
    result.prediction.target_uid = instance.target_uid;
    result.prediction.policy = Policy::top5;
    result.prediction.scores = std::move(base_scores);

    std::map<int, const Snippet*> by_index;
    for (const auto& cand : instance.candidates) by_index[*cand.cand_index] = &cand;

    std::vector<int> positives;
    for (int idx : probe_order) {
        const std::string prompt = render_pairwise(instance, *by_index.at(idx), spec, templates, tokenizer);
        const std::string response = client.complete(prompt);
        ++result.requests;
        ParsedVerdict verdict = parse_pairwise(response);
        if (verdict.is_recap) positives.push_back(idx);
        if (verdict.unparseable && !result.prediction.has_flag("unparseable_response"))
            result.prediction.flags.push_back("unparseable_response");
        result.verdicts.push_back(VerdictRecord{instance.target_uid, PromptMode::pairwise, idx, std::move(verdict)});
    }

    std::sort(positives.begin(), positives.end());  // nearest positives first
    std::set<int> positive_set(positives.begin(), positives.end());
    for (int idx : positives) {
        if (result.prediction.selected.size() >= 5) break;
        result.prediction.selected.push_back(idx);
        result.prediction.scores[static_cast<size_t>(idx)] = 2000.0 - static_cast<double>(idx);
    }
    double pad_score = 1000.0;
    for (int idx : pad_order) {
        if (result.prediction.selected.size() >= 5) break;
        if (positive_set.count(idx)) continue;
        result.prediction.selected.push_back(idx);
        result.prediction.pads.insert(idx);
        result.prediction.scores[static_cast<size_t>(idx)] = pad_score;
        pad_score -= 1.0;
    }
    if (!result.prediction.pads.empty()) result.prediction.flags.push_back("padded");
    return result;
}

}  // namespace detail

// One request per admissible candidate; the nearest 5 positives win, and
// shortfalls are padded with the nearest non-positive candidates (flagged,
// excluded from free-mode scoring downstream).
inline LlmRunResult run_pairwise(const TargetInstance& instance, LLMClient& client,
                                 const std::set<int>& admissible, const PromptSpec& spec,
                                 const TemplateSet& templates, const TokenizerRef& tokenizer) {
    if (admissible.empty()) fail("SchemaViolation", "run_pairwise needs a non-empty admissible set");
    std::vector<int> order(admissible.begin(), admissible.end());  // ascending = by proximity
    std::vector<double> base(instance.candidates.size(), kInadmissible);
    for (int idx : order) base[static_cast<size_t>(idx)] = -static_cast<double>(idx);
    PromptSpec pw = spec;
    pw.mode = PromptMode::pairwise;
    return detail::pairwise_over(instance, client, order, order, pw, templates, tokenizer, std::move(base));
}

// Cascade: an embedding model (a trained snippet embedder) keeps only the
// k_filter most similar candidates, then pairwise prompting adjudicates the
// survivors; pads follow the embedding rank order. With k_filter covering
// the whole admissible set the cascade degenerates to plain run_pairwise.
inline LlmRunResult run_pipeline(const TargetInstance& instance, const EmbeddingBackend& embedder,
                                 LLMClient& client, const std::set<int>& admissible,
                                 const PromptSpec& spec, const TemplateSet& templates,
                                 const TokenizerRef& tokenizer, int k_filter = 15) {
    if (admissible.empty()) fail("SchemaViolation", "run_pipeline needs a non-empty admissible set");
    if (k_filter >= static_cast<int>(admissible.size()))
        return run_pairwise(instance, client, admissible, spec, templates, tokenizer);

    RankOptions opts;
    opts.event_prefix = spec.event_prefix;
    const RankedPrediction l2n = rank_by_embedding(instance, embedder, admissible, opts);
    std::vector<int> by_rank = score_order(l2n.scores);  // similarity desc, index asc
    by_rank.resize(static_cast<size_t>(k_filter));

    std::vector<int> probe_order = by_rank;
    std::sort(probe_order.begin(), probe_order.end());
    std::vector<double> base(instance.candidates.size(), kInadmissible);
    for (size_t k = 0; k < l2n.scores.size(); ++k)
        if (l2n.scores[k] != kInadmissible) base[k] = l2n.scores[k];  // survivors overwritten below

    PromptSpec pw = spec;
    pw.mode = PromptMode::pairwise;
    auto result =
        detail::pairwise_over(instance, client, probe_order, by_rank, pw, templates, tokenizer, std::move(base));
    result.prediction.flags.push_back("l2n_filtered");
    return result;
}

inline void write_verdicts(std::ostream& out, const std::vector<VerdictRecord>& verdicts) {
    for (const auto& v : verdicts) out << verdict_to_json(v).dump() << '\n';
}

}  // namespace recap
