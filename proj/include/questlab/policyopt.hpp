#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "questlab/rng.hpp"

namespace questlab::policy {

using json = nlohmann::json;

// A templated action. Binding to concrete tool calls (which entity, which
// query string) happens in the environment at rollout time, so the policy core
// stays independent of the search environment.
struct ActionTemplate {
    enum class Kind {
        search_start,       // search the instance's start conditions
        search_hop,         // search "<relation phrase> <last hit name>" for hop `index`
        search_key_entity,  // search key entity `index` by name (oracle scripts)
        search_literal,     // search `literal` verbatim (scripted agents)
        crawl_top,          // crawl the top entity of the last successful search
        reflect,
        answer_top,         // answer with the top entity name of the last hit
        answer_literal,     // answer with `literal` (scripted policies)
        raw_literal,        // emit `literal` verbatim (format-fault injection)
    };

    Kind kind = Kind::reflect;
    int index = 0;
    std::string literal;
    std::string tool = "web_search";  // which search tool the template binds to

    std::string name() const;
    json to_json() const;
    static ActionTemplate from_json(const json& j);
    bool operator==(const ActionTemplate&) const = default;
};

// The standard six-action vocabulary used by the trainable surrogate.
std::vector<ActionTemplate> demo_vocabulary(int hops);

// Linear-softmax policy over hand-crafted state features. Probabilities are
// always recomputed from logits; only the weight matrix is stored.
struct PolicyParams {
    int feature_count = 0;
    std::vector<ActionTemplate> vocabulary;
    std::vector<double> weights;  // feature-major: weights[f * A + a]

    static PolicyParams zeros(int feature_count, std::vector<ActionTemplate> vocabulary);

    int action_count() const { return static_cast<int>(vocabulary.size()); }
    double& at(int feature, int action) {
        return weights[static_cast<std::size_t>(feature) * vocabulary.size() +
                       static_cast<std::size_t>(action)];
    }
    double at(int feature, int action) const {
        return weights[static_cast<std::size_t>(feature) * vocabulary.size() +
                       static_cast<std::size_t>(action)];
    }

    std::vector<double> logits(const std::vector<double>& features) const;
    std::vector<double> probs(const std::vector<double>& features) const;
    std::vector<double> log_probs(const std::vector<double>& features) const;
    double log_prob(const std::vector<double>& features, int action) const;

    int sample(const std::vector<double>& features, Rng& rng) const;
    int argmax(const std::vector<double>& features) const;

    json to_json() const;
    static PolicyParams from_json(const json& j);
    void save(const std::string& path) const;
    static PolicyParams load(const std::string& path);
    std::string fingerprint() const;
};

// One recorded decision: the feature vector seen, the action taken, and the
// action's log-probability under the policy that generated it.
struct PolicyStep {
    std::vector<double> features;
    int action = 0;
    double logprob_old = 0.0;
};

struct PolicyTrajectory {
    std::string query_id;
    std::vector<PolicyStep> steps;
    double reward = 0.0;

    json to_json() const;
    static PolicyTrajectory from_json(const json& j);
};

struct TrajectoryGroup {
    std::string query_id;
    std::vector<PolicyTrajectory> members;  // >= 2
};

struct LossReport {
    // Minimization convention: `value` is the quantity a gradient step should
    // decrease and `gradient` is d(value)/d(weights). RL objectives (GRPO,
    // GSPO, DAPO) are maximized, so their reports carry the negated objective.
    double value = 0.0;
    std::vector<double> gradient;
    double clip_fraction = 0.0;
    double mean_ratio = 1.0;
    double entropy = 0.0;
};

// Behavior cloning: mean over trajectories of the summed negative action
// log-likelihood.
LossReport bc_loss(const PolicyParams& params, const std::vector<PolicyTrajectory>& experts);

// Group-relative advantages: reward minus the group mean.
std::vector<double> group_advantages(const TrajectoryGroup& group);

// Policy-gradient surrogate with an exact per-state categorical KL penalty to
// the reference policy, averaged over visited states.
LossReport grpo_loss(const PolicyParams& params, const PolicyParams& ref,
                     const std::vector<TrajectoryGroup>& groups, double beta);

// Sequence-level importance ratio: exponentiated mean of per-action log ratios.
double gspo_ratio(const PolicyParams& params, const PolicyParams& old_params,
                  const PolicyTrajectory& trajectory);

// Clipped sequence-level objective over group-relative advantages.
LossReport gspo_objective(const PolicyParams& params, const PolicyParams& old_params,
                          const std::vector<TrajectoryGroup>& groups, double epsilon);

// Token-level asymmetric-clip objective with the dynamic sampling filter:
// groups whose members all share one reward value are discarded, and the
// objective is normalized by total action count across retained members.
// Raises Error("all-groups-filtered") when nothing survives the filter.
LossReport dapo_objective(const PolicyParams& params, const PolicyParams& old_params,
                          const std::vector<TrajectoryGroup>& groups, double epsilon_low,
                          double epsilon_high);

struct StopCriterionConfig {
    int trials = 8;         // G samples per query
    int min_valid = 2;      // required valid trajectories
    double confidence = 0.95;
};

// Largest per-trajectory failure probability p such that
// P(#valid >= min_valid | trials, validity 1-p) >= confidence. Bisection to 1e-9.
double sft_stop_threshold(const StopCriterionConfig& cfg);

// P(X >= k) for X ~ Binomial(n, success_p).
double binomial_at_least(int n, int k, double success_p);

}  // namespace questlab::policy
