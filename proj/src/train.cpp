#include "questlab/train.hpp"

#include <algorithm>
#include <cmath>

#include "questlab/errors.hpp"
#include "questlab/text.hpp"

namespace questlab::policy {

void TrainConfig::validate() const {
    require(objective == "grpo" || objective == "gspo" || objective == "dapo", "config-invalid",
            "objective must be grpo, gspo, or dapo");
    require(group_size >= 2, "config-invalid", "group_size must be >= 2");
    require(batch_instances >= 1, "config-invalid", "batch_instances must be >= 1");
    require(steps >= 0, "config-invalid", "steps must be >= 0");
    require(learning_rate > 0, "config-invalid", "learning_rate must be positive");
    require(beta >= 0, "config-invalid", "beta must be >= 0");
    require(epsilon > 0, "config-invalid", "epsilon must be positive");
    require(epsilon_low > 0 && epsilon_low < epsilon_high, "config-invalid",
            "need 0 < epsilon_low < epsilon_high");
    require(eval_interval >= 1, "config-invalid", "eval_interval must be >= 1");
    require(metrics_smoothing > 0 && metrics_smoothing <= 1, "config-invalid",
            "metrics_smoothing must be in (0,1]");
    require(data_gamma > 0 && data_gamma < 1, "config-invalid", "data_gamma must be in (0,1)");
    tools.validate();
    require(limits.max_steps >= 1, "config-invalid", "max_steps must be >= 1");
}

PolicyTrajectory to_policy_trajectory(const env::Trajectory& trajectory, double reward) {
    require(trajectory.features.size() == trajectory.steps.size() &&
                trajectory.action_indices.size() == trajectory.steps.size() &&
                trajectory.action_log_probs.size() == trajectory.steps.size(),
            "invalid-argument", "trajectory lacks a full policy trace");
    PolicyTrajectory out;
    out.query_id = trajectory.query_id;
    out.reward = reward;
    for (std::size_t t = 0; t < trajectory.steps.size(); ++t)
        out.steps.push_back(
            {trajectory.features[t], trajectory.action_indices[t], trajectory.action_log_probs[t]});
    return out;
}

double evaluate_orm(const PolicyParams& params, const env::Corpus& corpus,
                    const std::vector<kg::QueryInstance>& instances,
                    const env::ToolLayerConfig& tools, const env::RolloutLimits& limits,
                    std::uint64_t seed) {
    if (instances.empty()) return 0.0;
    rewards::ExactMatchJudge judge;
    double correct = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        env::Trajectory t = env::rollout(params, instances[i], corpus, tools, limits,
                                         Rng::mix(seed, 0xE5A1 + i), /*greedy=*/true);
        correct += rewards::orm(t, instances[i], judge).decision;
    }
    return correct / static_cast<double>(instances.size());
}

namespace {

struct BatchStats {
    double tool = 0.0, format = 0.0, prm = 0.0, orm = 0.0, total = 0.0;
};

std::map<kg::Difficulty, std::vector<std::size_t>> bin_instances(
    const std::vector<kg::QueryInstance>& instances) {
    std::map<kg::Difficulty, std::vector<std::size_t>> bins;
    for (std::size_t i = 0; i < instances.size(); ++i)
        bins[instances[i].difficulty].push_back(i);
    return bins;
}

}  // namespace

std::string TrainResult::metrics_csv() const {
    std::string out = "step,orm,prm,tool,format,total_reward,lambda_tool,lambda_format,"
                      "lambda_prm,lambda_orm\n";
    for (const TrainMetricsRow& r : metrics) {
        out += std::to_string(r.step) + "," + text::format_double(r.orm) + "," +
               text::format_double(r.prm) + "," + text::format_double(r.tool) + "," +
               text::format_double(r.format) + "," + text::format_double(r.total_reward) + "," +
               text::format_double(r.lambdas.tool) + "," + text::format_double(r.lambdas.format) +
               "," + text::format_double(r.lambdas.prm) + "," +
               text::format_double(r.lambdas.orm) + "\n";
    }
    return out;
}

std::string TrainResult::schedule_csv() const {
    std::string out = "step,phase,lambda_tool,lambda_format,lambda_prm,lambda_orm\n";
    for (const ScheduleRow& r : schedule_rows) {
        out += std::to_string(r.step) + "," + rewards::to_string(r.phase) + "," +
               text::format_double(r.lambdas.tool) + "," + text::format_double(r.lambdas.format) +
               "," + text::format_double(r.lambdas.prm) + "," +
               text::format_double(r.lambdas.orm) + "\n";
    }
    return out;
}

TrainResult train(const PolicyParams& init, const kg::KnowledgeGraph& graph,
                  const std::vector<kg::QueryInstance>& train_set,
                  const std::vector<kg::QueryInstance>& validation, const TrainConfig& config) {
    config.validate();
    require(!train_set.empty(), "invalid-argument", "empty training set");

    env::Corpus corpus(graph);
    rewards::ExactMatchJudge judge;

    TrainResult result;
    result.params = init;
    result.schedule = rewards::ScheduleState::initial(config.thresholds);
    result.schedule_rows.push_back({0, result.schedule.phase, result.schedule.coefficients});

    auto bins = bin_instances(train_set);
    for (const auto& [difficulty, members] : bins) {
        (void)members;
        result.proportions[difficulty] = 1.0 / static_cast<double>(bins.size());
    }

    Rng pick_rng(Rng::mix(config.seed, 0x62617463));
    rewards::ScheduleMetrics ema{0, 0.0, 0.0, 0.0, 0.0};
    bool ema_primed = false;

    for (long step = 1; step <= config.steps; ++step) {
        // Draw the batch according to the difficulty-bin proportions.
        std::vector<std::size_t> batch;
        for (int b = 0; b < config.batch_instances; ++b) {
            double u = pick_rng.unit();
            kg::Difficulty chosen = result.proportions.begin()->first;
            double acc = 0.0;
            for (const auto& [difficulty, share] : result.proportions) {
                acc += share;
                chosen = difficulty;
                if (u < acc) break;
            }
            const auto& members = bins.at(chosen);
            batch.push_back(members[pick_rng.index(members.size())]);
        }

        // Group rollouts, scored with the coefficients currently in force.
        std::vector<TrajectoryGroup> groups;
        BatchStats stats;
        std::size_t step_count = 0, traj_count = 0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const kg::QueryInstance& instance = train_set[batch[b]];
            std::vector<env::Trajectory> rollouts;
            for (int g = 0; g < config.group_size; ++g) {
                const std::uint64_t rollout_seed = Rng::mix(
                    config.seed, 0x1000000ull * static_cast<std::uint64_t>(step) +
                                     0x10000ull * b + static_cast<std::uint64_t>(g));
                rollouts.push_back(env::rollout(result.params, instance, corpus, config.tools,
                                                config.limits, rollout_seed));
            }
            std::vector<rewards::ScoredTrajectory> scored = rewards::score_group(
                std::move(rollouts), instance, judge, result.schedule.coefficients);
            if (scored.size() < 2) continue;  // unscoreable members shrank the group too far

            TrajectoryGroup group;
            group.query_id = instance.id;
            for (const rewards::ScoredTrajectory& st : scored) {
                group.members.push_back(to_policy_trajectory(st.trajectory, st.breakdown.total));
                for (const env::Step& s : st.trajectory.steps) {
                    stats.tool += s.tool_success;
                    stats.format += s.format_valid ? 1.0 : 0.0;
                    ++step_count;
                }
                stats.prm += st.breakdown.prm_score;
                stats.orm += st.breakdown.orm_score;
                stats.total += st.breakdown.total;
                ++traj_count;
            }
            groups.push_back(std::move(group));
        }
        if (groups.empty()) continue;
        if (step_count > 0) {
            stats.tool /= static_cast<double>(step_count);
            stats.format /= static_cast<double>(step_count);
        }
        if (traj_count > 0) {
            stats.prm /= static_cast<double>(traj_count);
            stats.orm /= static_cast<double>(traj_count);
            stats.total /= static_cast<double>(traj_count);
        }

        result.metrics.push_back({step, stats.orm, stats.prm, stats.tool, stats.format,
                                  stats.total, result.schedule.coefficients});

        // Smooth the gate metrics so single noisy batches cannot flip a phase.
        if (!ema_primed) {
            ema = {step, stats.tool, stats.format, stats.prm, stats.orm};
            ema_primed = true;
        } else {
            const double a = config.metrics_smoothing;
            ema.tool_success_rate = (1 - a) * ema.tool_success_rate + a * stats.tool;
            ema.format_rate = (1 - a) * ema.format_rate + a * stats.format;
            ema.prm_mean = (1 - a) * ema.prm_mean + a * stats.prm;
            ema.orm_acc = (1 - a) * ema.orm_acc + a * stats.orm;
            ema.step = step;
        }
        rewards::ScheduleState advanced = rewards::advance_schedule(result.schedule, ema);
        if (advanced.phase != result.schedule.phase)
            result.schedule_rows.push_back({step, advanced.phase, advanced.coefficients});
        result.schedule = std::move(advanced);

        // Gradient ascent on the selected objective.
        LossReport report;
        bool have_gradient = true;
        if (config.objective == "grpo") {
            report = grpo_loss(result.params, init, groups, config.beta);
        } else if (config.objective == "gspo") {
            report = gspo_objective(result.params, result.params, groups, config.epsilon);
        } else {
            try {
                report = dapo_objective(result.params, result.params, groups, config.epsilon_low,
                                        config.epsilon_high);
            } catch (const Error& e) {
                if (e.code() != "all-groups-filtered") throw;
                have_gradient = false;  // degenerate batch, skip the update
            }
        }
        if (have_gradient) {
            for (std::size_t i = 0; i < result.params.weights.size(); ++i)
                result.params.weights[i] -= config.learning_rate * report.gradient[i];
        }

        // Validation pass drives the difficulty-bin data schedule.
        if (step % config.eval_interval == 0 && !validation.empty()) {
            std::map<kg::Difficulty, double> bin_acc;
            auto vbins = bin_instances(validation);
            for (const auto& [difficulty, members] : vbins) {
                std::vector<kg::QueryInstance> subset;
                for (std::size_t idx : members) subset.push_back(validation[idx]);
                bin_acc[difficulty] =
                    evaluate_orm(result.params, corpus, subset, config.tools, config.limits,
                                 Rng::mix(config.seed, 0xEEE + static_cast<std::uint64_t>(step)));
            }
            std::map<kg::Difficulty, double> acc_for_bins;
            for (const auto& [difficulty, share] : result.proportions) {
                (void)share;
                auto it = bin_acc.find(difficulty);
                acc_for_bins[difficulty] = it == bin_acc.end() ? 0.3 : it->second;
            }
            result.proportions =
                rewards::schedule_data(acc_for_bins, result.proportions, config.data_gamma);
        }
    }

    result.validation_orm = evaluate_orm(result.params, corpus, validation, config.tools,
                                         config.limits, Rng::mix(config.seed, 0xF1AA));
    return result;
}

}  // namespace questlab::policy
