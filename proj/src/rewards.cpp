#include "questlab/rewards.hpp"

#include <cmath>

#include "questlab/errors.hpp"
#include "questlab/text.hpp"

namespace questlab::rewards {

CoefficientVector::CoefficientVector(double tool_w, double format_w, double prm_w, double orm_w)
    : tool(tool_w), format(format_w), prm(prm_w), orm(orm_w) {
    require(tool >= 0 && format >= 0 && prm >= 0 && orm >= 0, "config-invalid",
            "reward coefficients must be non-negative");
    require(std::abs(tool + format + prm + orm - 1.0) <= 1e-9, "config-invalid",
            "reward coefficients must sum to 1");
    require(orm <= 0.5 + 1e-12, "config-invalid", "ORM coefficient is capped at 0.5");
}

json CoefficientVector::to_json() const {
    return {{"tool", tool}, {"format", format}, {"prm", prm}, {"orm", orm}};
}

CoefficientVector CoefficientVector::from_json(const json& j) {
    return {j.at("tool").get<double>(), j.at("format").get<double>(), j.at("prm").get<double>(),
            j.at("orm").get<double>()};
}

std::vector<double> tool_reward(const std::vector<int>& success_flags) {
    require(!success_flags.empty(), "invalid-argument", "need at least one step");
    std::vector<double> out;
    out.reserve(success_flags.size());
    int prev = 1;  // the step before the first counts as a success
    for (int c : success_flags) {
        if (c == 1)
            out.push_back(0.1);
        else if (prev == 0)
            out.push_back(-0.2);
        else
            out.push_back(-0.1);
        prev = c;
    }
    return out;
}

std::vector<double> format_reward(const std::vector<bool>& format_flags) {
    require(!format_flags.empty(), "invalid-argument", "need at least one step");
    std::vector<double> out;
    out.reserve(format_flags.size());
    for (bool ok : format_flags) out.push_back(ok ? 0.1 : -0.2);
    return out;
}

double prm(const env::Trajectory& trajectory, const std::vector<std::string>& entity_set) {
    require(!entity_set.empty(), "empty-entity-set", "PRM needs at least one key entity");
    std::string visible;
    for (const env::Step& s : trajectory.steps) {
        visible += s.thought;
        visible += '\n';
        visible += s.observation.flatten();
        visible += '\n';
    }
    std::size_t seen = 0;
    for (const std::string& name : entity_set)
        if (text::contains_norm(visible, name)) ++seen;
    return static_cast<double>(seen) / static_cast<double>(entity_set.size());
}

std::array<JudgeVote, 3> ExactMatchJudge::judge(const env::Trajectory& trajectory,
                                                const kg::QueryInstance& instance) {
    int vote = 0;
    std::string rationale;
    if (!trajectory.final_answer) {
        rationale = "no final answer";
    } else if (text::normalize(*trajectory.final_answer) == text::normalize(instance.answer)) {
        vote = 1;
        rationale = "exact match with the canonical answer";
    } else {
        rationale = "answer differs from the canonical answer";
    }
    return {JudgeVote{vote, rationale}, JudgeVote{vote, rationale}, JudgeVote{vote, rationale}};
}

JudgeVerdict orm(const env::Trajectory& trajectory, const kg::QueryInstance& instance,
                 JudgeBackend& judges) {
    JudgeVerdict verdict;
    verdict.votes = judges.judge(trajectory, instance);
    int ones = 0;
    for (const JudgeVote& v : verdict.votes) ones += v.vote ? 1 : 0;
    verdict.decision = ones >= 2 ? 1 : 0;
    return verdict;
}

double composite(const std::vector<double>& tool_rewards,
                 const std::vector<double>& format_rewards, double prm_score, int orm_score,
                 const CoefficientVector& coefficients) {
    require(!tool_rewards.empty(), "invalid-argument", "empty step reward list");
    require(tool_rewards.size() == format_rewards.size(), "invalid-argument",
            "tool/format reward lists differ in length");
    const double T = static_cast<double>(tool_rewards.size());
    double step_sum = 0.0;
    for (std::size_t t = 0; t < tool_rewards.size(); ++t)
        step_sum += coefficients.tool * tool_rewards[t] + coefficients.format * format_rewards[t];
    return coefficients.orm * orm_score + coefficients.prm * prm_score + step_sum / T;
}

json RewardBreakdown::to_json() const {
    return {{"tool_rewards", tool_rewards}, {"format_rewards", format_rewards},
            {"prm", prm_score},             {"orm", orm_score},
            {"total", total},               {"coefficients", coefficients.to_json()}};
}

RewardBreakdown RewardBreakdown::from_json(const json& j) {
    RewardBreakdown b;
    b.tool_rewards = j.at("tool_rewards").get<std::vector<double>>();
    b.format_rewards = j.at("format_rewards").get<std::vector<double>>();
    b.prm_score = j.at("prm").get<double>();
    b.orm_score = j.at("orm").get<int>();
    b.total = j.at("total").get<double>();
    b.coefficients = CoefficientVector::from_json(j.at("coefficients"));
    return b;
}

RewardBreakdown score_trajectory(const env::Trajectory& trajectory,
                                 const kg::QueryInstance& instance, JudgeBackend& judges,
                                 const CoefficientVector& coefficients) {
    require(!trajectory.steps.empty(), "invalid-argument", "empty trajectory");
    std::vector<int> success;
    std::vector<bool> valid;
    for (const env::Step& s : trajectory.steps) {
        success.push_back(s.tool_success);
        valid.push_back(s.format_valid);
    }
    RewardBreakdown b;
    b.coefficients = coefficients;
    b.tool_rewards = tool_reward(success);
    b.format_rewards = format_reward(valid);
    b.prm_score = instance.entity_set.empty() ? 0.0 : prm(trajectory, instance.entity_set);
    b.orm_score = orm(trajectory, instance, judges).decision;
    b.total = composite(b.tool_rewards, b.format_rewards, b.prm_score, b.orm_score, coefficients);
    return b;
}

std::vector<ScoredTrajectory> score_group(std::vector<env::Trajectory> trajectories,
                                          const kg::QueryInstance& instance,
                                          JudgeBackend& judges,
                                          const CoefficientVector& coefficients,
                                          std::size_t* unscoreable) {
    std::vector<ScoredTrajectory> out;
    std::size_t dropped = 0;
    for (env::Trajectory& t : trajectories) {
        try {
            RewardBreakdown breakdown = score_trajectory(t, instance, judges, coefficients);
            out.push_back({std::move(t), std::move(breakdown)});
        } catch (const Error& e) {
            if (e.code() != "judge-unavailable") throw;
            ++dropped;
        }
    }
    if (unscoreable) *unscoreable = dropped;
    return out;
}

// ---------------------------------------------------------------------------
// Coefficient schedule

std::string to_string(Phase p) {
    switch (p) {
        case Phase::tool_focus: return "P0_tool_focus";
        case Phase::prm_focus: return "P1_prm_focus";
        case Phase::orm_focus: return "P2_orm_focus";
        case Phase::terminal: return "P3_terminal";
    }
    return "P0_tool_focus";
}

ScheduleState ScheduleState::initial(const ScheduleThresholds& thresholds) {
    ScheduleState s;
    s.phase = Phase::tool_focus;
    s.coefficients = CoefficientVector::initial();
    s.thresholds = thresholds;
    return s;
}

ScheduleState advance_schedule(const ScheduleState& state, const ScheduleMetrics& metrics) {
    ScheduleState next = state;
    bool moved = true;
    while (moved) {
        moved = false;
        const CoefficientVector& c = next.coefficients;
        switch (next.phase) {
            case Phase::tool_focus:
                if (metrics.tool_success_rate >= next.thresholds.tool) {
                    // Tool use saturated: hand the released weight to PRM.
                    const double released = c.tool - next.thresholds.tool_floor;
                    next.coefficients = CoefficientVector(next.thresholds.tool_floor, c.format,
                                                          c.prm + released, c.orm);
                    next.history.push_back({metrics.step, Phase::tool_focus, Phase::prm_focus});
                    next.phase = Phase::prm_focus;
                    moved = true;
                }
                break;
            case Phase::prm_focus:
                if (metrics.format_rate >= next.thresholds.format) {
                    // Format stabilized: split the released weight between PRM and ORM.
                    const double released = c.format - next.thresholds.format_floor;
                    next.coefficients =
                        CoefficientVector(c.tool, next.thresholds.format_floor,
                                          c.prm + 0.5 * released, c.orm + 0.5 * released);
                    next.history.push_back({metrics.step, Phase::prm_focus, Phase::orm_focus});
                    next.phase = Phase::orm_focus;
                    moved = true;
                }
                break;
            case Phase::orm_focus:
                if (metrics.prm_mean >= next.thresholds.prm) {
                    // Coverage matured: shift dominance to the outcome signal,
                    // respecting the 0.5 cap.
                    double shift = 0.5 * c.prm;
                    if (c.orm + shift > 0.5) shift = 0.5 - c.orm;
                    next.coefficients =
                        CoefficientVector(c.tool, c.format, c.prm - shift, c.orm + shift);
                    next.history.push_back({metrics.step, Phase::orm_focus, Phase::terminal});
                    next.phase = Phase::terminal;
                    moved = true;
                }
                break;
            case Phase::terminal:
                break;
        }
    }
    return next;
}

std::map<kg::Difficulty, double> schedule_data(
    const std::map<kg::Difficulty, double>& bin_accuracy,
    const std::map<kg::Difficulty, double>& proportions, double gamma) {
    require(gamma > 0.0 && gamma < 1.0, "config-invalid", "gamma must be in (0,1)");
    double total = 0.0;
    for (const auto& [d, p] : proportions) {
        (void)d;
        require(p >= 0.0, "invalid-argument", "proportions must be non-negative");
        total += p;
    }
    require(std::abs(total - 1.0) <= 1e-6, "invalid-argument", "proportions must sum to 1");

    auto in_band = [&](kg::Difficulty d) {
        auto it = bin_accuracy.find(d);
        const double acc = it == bin_accuracy.end() ? 0.3 : it->second;
        return acc >= 0.1 && acc <= 0.5;
    };

    bool any_in_band = false;
    for (const auto& [d, p] : proportions) {
        (void)p;
        if (in_band(d)) any_in_band = true;
    }
    if (!any_in_band) return proportions;  // nowhere to move the mass

    std::map<kg::Difficulty, double> next = proportions;
    double released = 0.0;
    double in_band_mass = 0.0;
    std::size_t in_band_count = 0;
    for (auto& [d, p] : next) {
        if (in_band(d)) {
            in_band_mass += p;
            ++in_band_count;
        } else {
            released += p * (1.0 - gamma);
            p *= gamma;
        }
    }
    for (auto& [d, p] : next) {
        if (!in_band(d)) continue;
        if (in_band_mass > 0)
            p += released * (p / in_band_mass);
        else
            p += released / static_cast<double>(in_band_count);
    }

    double sum = 0.0;
    for (const auto& [d, p] : next) {
        (void)d;
        sum += p;
    }
    for (auto& [d, p] : next) {
        (void)d;
        p /= sum;
    }
    return next;
}

}  // namespace questlab::rewards
