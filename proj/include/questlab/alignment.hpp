#pragma once

#include <string>
#include <vector>

#include "questlab/kgforge.hpp"
#include "questlab/policyopt.hpp"
#include "questlab/reportrewards.hpp"
#include "questlab/searchenv.hpp"

namespace questlab::align {

using json = nlohmann::json;

// One self-sampled output: the trajectory, a report rendered from it, and the
// provenance that proves it came from the policy's own distribution.
struct Sample {
    std::string input_id;
    env::Trajectory trajectory;
    std::string report_body;
    std::uint64_t seed = 0;
    std::string policy_fingerprint;

    json to_json() const;
    static Sample from_json(const json& j);
};

// Deterministic markdown rendering of a single trajectory (the report the
// quality pipeline scores). Sections, an evidence table, [n] citations into the
// trajectory's own tool calls, and a final answer tag when one exists.
std::string trajectory_report(const kg::QueryInstance& instance,
                              const env::Trajectory& trajectory);

// K rollouts per input under distinct derived seeds, with provenance recorded.
// A deterministic policy yields K identical outputs; that is detectable via the
// zero_diversity flag below.
std::vector<Sample> self_sample(const policy::PolicyParams& params,
                                const std::vector<kg::QueryInstance>& inputs, int k,
                                const env::Corpus& corpus, const env::ToolLayerConfig& tools,
                                const env::RolloutLimits& limits, std::uint64_t seed);

bool zero_diversity(const std::vector<Sample>& samples);  // all outputs identical per input

struct QualityWeights {
    double w_judge = 1.0;
    double lambda_f = 0.1;
    double lambda_c = 0.1;
    double temporal_penalty = 0.05;  // per confirmed temporal error
    std::string now_date = "2026-01-01";
    double tau = 0.3;  // citation relevance threshold
};

struct QualityScore {
    double judge = 0.0;     // in [0,1]
    double rule = 0.0;      // <= 0, hard penalties
    double combined = 0.0;  // w_judge * judge + rule
    QualityWeights weights;

    json to_json() const;
};

// Judge component: rubric aggregate of the rule-scored report. Rule component:
// lambda_f * report format reward + lambda_c * min(citation reward, 0) minus a
// per-temporal-error penalty. The citation reference count defaults to the
// number of distinct successful retrieval calls in the sample's own trajectory.
QualityScore quality_score(const Sample& sample, const kg::QueryInstance& instance,
                           const report::RubricSet& rubric, const QualityWeights& weights);

struct ScoredSample {
    Sample sample;
    QualityScore score;
};

// s >= tau_hi goes to D+, s <= tau_lo to D-, the middle band is discarded and
// exact ties on tau_hi == tau_lo are excluded from both sides.
std::pair<std::vector<ScoredSample>, std::vector<ScoredSample>> partition(
    const std::vector<ScoredSample>& scored, double tau_hi, double tau_lo);

struct PreferencePair {
    std::string input_id;
    policy::PolicyTrajectory chosen;
    policy::PolicyTrajectory rejected;
    double gap = 0.0;  // score(chosen) - score(rejected), strictly positive
};

// All (D+, D-) cross pairs within the same input.
std::vector<PreferencePair> build_pairs(const std::vector<ScoredSample>& dplus,
                                        const std::vector<ScoredSample>& dminus);

// -E[log sigma(beta * policy-vs-reference log-prob margin)] with analytic
// gradient.
policy::LossReport dpo_loss(const policy::PolicyParams& params,
                            const policy::PolicyParams& ref_params,
                            const std::vector<PreferencePair>& pairs, double beta);

// Behavior cloning restricted to D+; identical machinery to bc_loss.
policy::LossReport self_sft_loss(const policy::PolicyParams& params,
                                 const std::vector<policy::PolicyTrajectory>& dplus);

}  // namespace questlab::align
