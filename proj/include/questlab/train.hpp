#pragma once

#include <map>
#include <string>
#include <vector>

#include "questlab/kgforge.hpp"
#include "questlab/policyopt.hpp"
#include "questlab/rewards.hpp"
#include "questlab/searchenv.hpp"

namespace questlab::policy {

struct TrainConfig {
    std::string objective = "grpo";  // grpo | gspo | dapo
    int group_size = 8;              // rollouts per query
    int batch_instances = 8;         // queries per optimizer step
    int steps = 300;
    double learning_rate = 2.0;
    double beta = 0.05;       // GRPO KL strength; keeps exploration alive early
    double epsilon = 0.2;     // GSPO clip radius
    double epsilon_low = 0.2;
    double epsilon_high = 0.28;
    int eval_interval = 25;   // validation + data-schedule cadence
    std::uint64_t seed = 1;
    double metrics_smoothing = 0.2;  // EMA feeding the reward schedule gates
    env::ToolLayerConfig tools;
    env::RolloutLimits limits;
    rewards::ScheduleThresholds thresholds;
    double data_gamma = 0.5;

    void validate() const;
};

struct TrainMetricsRow {
    long step = 0;
    double orm = 0.0;
    double prm = 0.0;
    double tool = 0.0;
    double format = 0.0;
    double total_reward = 0.0;
    rewards::CoefficientVector lambdas = rewards::CoefficientVector::initial();
};

struct ScheduleRow {
    long step = 0;
    rewards::Phase phase = rewards::Phase::tool_focus;
    rewards::CoefficientVector lambdas = rewards::CoefficientVector::initial();
};

struct TrainResult {
    PolicyParams params;
    std::vector<TrainMetricsRow> metrics;
    std::vector<ScheduleRow> schedule_rows;
    rewards::ScheduleState schedule;
    std::map<kg::Difficulty, double> proportions;
    double validation_orm = 0.0;

    std::string metrics_csv() const;
    std::string schedule_csv() const;
};

// Extracts the policy-facing record (features, action, old log-prob) from an
// environment trajectory.
PolicyTrajectory to_policy_trajectory(const env::Trajectory& trajectory, double reward);

// Mean exact-match outcome accuracy of greedy rollouts over `instances`.
double evaluate_orm(const PolicyParams& params, const env::Corpus& corpus,
                    const std::vector<kg::QueryInstance>& instances,
                    const env::ToolLayerConfig& tools, const env::RolloutLimits& limits,
                    std::uint64_t seed);

// On-policy loop: batched group rollouts, reward scoring under the scheduled
// coefficients, threshold-triggered coefficient transitions, difficulty-bin
// data scheduling, and plain gradient ascent. Deterministic in (inputs, seed).
TrainResult train(const PolicyParams& init, const kg::KnowledgeGraph& graph,
                  const std::vector<kg::QueryInstance>& train_set,
                  const std::vector<kg::QueryInstance>& validation, const TrainConfig& config);

}  // namespace questlab::policy
