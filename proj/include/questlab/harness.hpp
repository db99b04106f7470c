#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "questlab/kgforge.hpp"
#include "questlab/reportrewards.hpp"
#include "questlab/searchenv.hpp"
#include "questlab/train.hpp"

namespace questlab::harness {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config document: a TOML-style subset, documented in docs/formats.md.
// Sections, `key = value` lines, values are strings, numbers, booleans, or
// arrays of strings; `#` starts a comment.

struct ConfigValue {
    enum class Kind { string, number, boolean, list };
    Kind kind = Kind::string;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<std::string> list;
};

class ConfigDoc {
public:
    static ConfigDoc parse(const std::string& text);
    static ConfigDoc from_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_number(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                      const std::vector<std::string>& fallback) const;

    const std::map<std::string, std::map<std::string, ConfigValue>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, ConfigValue>> sections_;
};

// One document holding every module configuration; validated against each
// module's preconditions before any stage runs.
struct RunConfig {
    // [paths]
    std::string graph_path;
    std::string templates_path;  // optional; auto phrase bank when empty
    std::string rules_path;      // optional obfuscation rules
    std::string policy_path;     // optional starting policy

    // [run]
    std::vector<std::string> stages = {"synth", "rollout", "eval"};

    // [synth]
    int synth_hops = 2;
    int synth_count = 50;
    int synth_holdout = 0;
    std::uint64_t synth_seed = 11;
    bool synth_obfuscate = false;

    // [rollout]
    std::uint64_t rollout_seed = 7;
    env::RolloutLimits limits;

    // [tools]
    env::ToolLayerConfig tools;

    // [rewards]
    rewards::ScheduleThresholds thresholds;
    double data_gamma = 0.5;

    // [train]
    policy::TrainConfig train;

    // [align]
    int align_k = 4;
    int align_inputs = 8;
    double align_tau_hi_pct = 0.7;
    double align_tau_lo_pct = 0.3;
    double align_beta = 0.5;
    double align_learning_rate = 0.5;
    int align_dpo_steps = 50;
    int align_self_sft_steps = 25;
    std::uint64_t align_seed = 5;
    double align_w_judge = 1.0;
    double align_temporal_penalty = 0.05;

    // [research]
    std::string research_query;
    std::string research_backend = "scripted";
    int research_parallelism = 2;
    std::uint64_t research_seed = 9;

    // [eval]
    std::string eval_now = "2026-06-30";

    static RunConfig from_file(const std::string& path);
    static RunConfig from_doc(const ConfigDoc& doc);
    void validate() const;
};

// ---------------------------------------------------------------------------
// Module evaluation (trace-based pipeline metrics)

struct ReportInput {
    std::optional<std::vector<std::pair<int, std::string>>> outline;
    std::string body;
};

struct MetricsReport {
    double reflection_turns_mean = 0.0;
    double query_repetition_rate = 0.0;
    std::map<std::string, double> tool_usage;  // retrieval tools, sums to 1 when any call
    double tool_failure_rate = 0.0;
    double outline_title_miss_rate = 0.0;
    int hierarchy_error_count = 0;
    double tense_error_rate = 0.0;  // fraction of reports with a confirmed error
    double valid_table_rate = 1.0;

    json to_json() const;
};

// Heading normalization for title matching: numbering prefixes stripped,
// case-folded, whitespace collapsed.
std::string normalize_heading(const std::string& heading);

MetricsReport module_eval(const std::vector<env::Trajectory>& traces,
                          const std::vector<ReportInput>& reports, const report::Date& now);

// ---------------------------------------------------------------------------
// End-to-end pipeline

// Executes the configured stages (synth -> rollout -> train -> align ->
// research -> eval) with shared seeds, writing artifacts and a summary with
// content hashes under `out_dir`. A stage failure writes error.json and
// rethrows.
void run_pipeline(const RunConfig& config, const std::string& out_dir);

}  // namespace questlab::harness
