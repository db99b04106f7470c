#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "questlab/kgforge.hpp"
#include "questlab/policyopt.hpp"
#include "questlab/rng.hpp"

namespace questlab::env {

using json = nlohmann::json;

enum class Tool { internal_search, web_search, academic_search, crawl, answer, reflect };

std::string to_string(Tool t);
Tool tool_from_string(const std::string& s);
bool is_retrieval(Tool t);

struct ToolCall {
    Tool tool = Tool::web_search;
    std::string argument;
    int step_index = 1;

    json to_json() const;
    static ToolCall from_json(const json& j);
};

struct Snippet {
    kg::EntityId entity;
    int score = 0;
    std::string text;  // first 400 characters of the document
};

struct Observation {
    enum class Status { ok, error };

    Status status = Status::ok;
    std::vector<Snippet> snippets;  // search results
    std::string text;               // crawled document, note, or error diagnostic
    bool from_cache = false;
    int latency_ticks = 0;

    bool ok() const { return status == Status::ok; }
    static Observation error_of(std::string diagnostic);

    // Every piece of visible text, used for entity matching and digests.
    std::string flatten() const;

    json to_json() const;
    static Observation from_json(const json& j);
};

struct Step {
    std::string thought;
    ToolCall action;
    Observation observation;
    bool format_valid = true;
    int tool_success = 0;  // 1 iff observation.status == ok

    json to_json() const;
    static Step from_json(const json& j);
};

struct Trajectory {
    std::string query_id;
    std::vector<Step> steps;
    std::optional<std::string> final_answer;
    std::uint64_t seed = 0;

    // Filled when a stochastic policy generated the trajectory.
    std::vector<double> action_log_probs;
    std::vector<std::vector<double>> features;
    std::vector<int> action_indices;

    json to_json() const;
    static Trajectory from_json(const json& j);
};

struct ToolLayerConfig {
    int max_retries = 2;
    int cache_capacity = 64;
    double failure_injection_rate = 0.0;  // Bernoulli per attempt
    int rate_limit = 64;                  // executed calls per trajectory per tool

    void validate() const;
};

// Immutable retrieval view over a knowledge graph. Documents are pre-tokenized
// once; the corpus is freely shareable across concurrent rollouts.
class Corpus {
public:
    explicit Corpus(const kg::KnowledgeGraph& graph);

    const kg::KnowledgeGraph& graph() const { return *graph_; }

    // Top-k documents in `partition` ("" = all) by unique-token overlap with
    // the query, stable-sorted by (score desc, entity id asc). Raises
    // Error("empty-corpus") when the partition holds no documents.
    std::vector<Snippet> search(const std::string& partition, const std::string& query,
                                int k) const;

    // Full stored document, byte-identical across calls.
    const std::string& crawl(const kg::EntityId& id) const;

private:
    const kg::KnowledgeGraph* graph_;
    std::vector<std::vector<std::string>> doc_tokens_;  // parallel to graph entities
};

// Per-trajectory gateway: routing, result cache, bounded retry with failure
// injection, and per-tool rate limiting. Failures surface as status=error
// observations with a diagnostic; only precondition violations throw.
class ToolSession {
public:
    ToolSession(const Corpus& corpus, ToolLayerConfig cfg, Rng rng);

    // Preconditions: call.tool is a retrieval tool (answer/reflect raise
    // Error("unknown-tool")).
    Observation execute(const ToolCall& call);

    int executed_calls(Tool t) const;

private:
    struct CacheEntry {
        std::string key;
        Observation value;
    };

    Observation perform(const ToolCall& call) const;

    const Corpus* corpus_;
    ToolLayerConfig cfg_;
    Rng rng_;
    std::vector<CacheEntry> cache_;  // front = most recent
    std::map<Tool, int> executed_;
};

// True iff the emission parses into exactly one tool call with its required
// fields: a known tool name, a string argument, and a non-empty argument for
// answer calls.
bool step_format_valid(std::string_view raw_emission);

std::optional<ToolCall> parse_action(std::string_view raw_emission, int step_index);

struct RolloutLimits {
    int max_steps = 8;
    long max_context_units = 100000;  // steps plus observation characters
};

// Rollout-time view of the trajectory used to build policy features and to
// bind action templates to concrete arguments.
struct RolloutState {
    int step = 1;
    bool last_ok = false;
    kg::EntityId last_top_entity;
    std::string last_top_name;
    std::vector<bool> key_seen;
    long context_units = 0;
};

inline constexpr int kFeatureCount = 17;

// [bias, step one-hot (1..8, clamped), last observation ok, first four
// key-entity-seen bits, difficulty one-hot]
std::vector<double> extract_features(const RolloutState& state, const kg::QueryInstance& instance);

// Expands a templated action into its raw emission for this instance/state.
std::string expand_action(const policy::ActionTemplate& tpl, const kg::QueryInstance& instance,
                          const RolloutState& state);

// ReAct loop: alternate policy selection and tool execution until an answer
// action or a limit. Deterministic in (params, instance, corpus, cfg, seed).
Trajectory rollout(const policy::PolicyParams& params, const kg::QueryInstance& instance,
                   const Corpus& corpus, const ToolLayerConfig& cfg, const RolloutLimits& limits,
                   std::uint64_t seed, bool greedy = false);

// Fixed action-template script instead of a policy; stops when the script or a
// limit is exhausted. Used by oracle policies and tests.
Trajectory rollout_scripted(const std::vector<policy::ActionTemplate>& script,
                            const kg::QueryInstance& instance, const Corpus& corpus,
                            const ToolLayerConfig& cfg, const RolloutLimits& limits,
                            std::uint64_t seed);

}  // namespace questlab::env
