#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "questlab/kgforge.hpp"
#include "questlab/searchenv.hpp"

namespace questlab::rewards {

using json = nlohmann::json;

// Reward mixing weights (tool, format, PRM, ORM). Construction enforces the
// normalization constraint: non-negative, sums to 1 within 1e-9, ORM <= 0.5.
struct CoefficientVector {
    double tool = 0.0;
    double format = 0.0;
    double prm = 0.0;
    double orm = 0.0;

    CoefficientVector(double tool_w, double format_w, double prm_w, double orm_w);
    static CoefficientVector initial() { return {0.6, 0.3, 0.1, 0.0}; }

    json to_json() const;
    static CoefficientVector from_json(const json& j);
};

// Per-step tool reward: +0.1 on success, -0.1 on an isolated failure, -0.2 on a
// consecutive failure. The step before the first is treated as a success.
std::vector<double> tool_reward(const std::vector<int>& success_flags);

// Per-step format reward: +0.1 valid, -0.2 invalid.
std::vector<double> format_reward(const std::vector<bool>& format_flags);

// Entity-coverage process reward: fraction of key entities observed anywhere in
// the trajectory's thoughts or observations (normalized substring match).
double prm(const env::Trajectory& trajectory, const std::vector<std::string>& entity_set);

struct JudgeVote {
    int vote = 0;  // 0/1
    std::string rationale;
};

struct JudgeVerdict {
    std::array<JudgeVote, 3> votes{};
    int decision = 0;  // majority of votes
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    // Exactly three binary votes; throws Error("judge-unavailable") when the
    // backend cannot produce them.
    virtual std::array<JudgeVote, 3> judge(const env::Trajectory& trajectory,
                                           const kg::QueryInstance& instance) = 0;
};

// Default desk-scale judge: normalized exact match against the canonical
// answer, replicated as three identical votes.
class ExactMatchJudge final : public JudgeBackend {
public:
    std::array<JudgeVote, 3> judge(const env::Trajectory& trajectory,
                                   const kg::QueryInstance& instance) override;
};

JudgeVerdict orm(const env::Trajectory& trajectory, const kg::QueryInstance& instance,
                 JudgeBackend& judges);

// Eq-style composite: orm_w*R_ORM + prm_w*R_PRM + mean_t(tool_w*r_tool +
// format_w*r_format). Both per-step lists must be non-empty and equally long.
double composite(const std::vector<double>& tool_rewards,
                 const std::vector<double>& format_rewards, double prm_score, int orm_score,
                 const CoefficientVector& coefficients);

struct RewardBreakdown {
    std::vector<double> tool_rewards;
    std::vector<double> format_rewards;
    double prm_score = 0.0;
    int orm_score = 0;
    double total = 0.0;
    CoefficientVector coefficients = CoefficientVector::initial();

    json to_json() const;
    static RewardBreakdown from_json(const json& j);
};

RewardBreakdown score_trajectory(const env::Trajectory& trajectory,
                                 const kg::QueryInstance& instance, JudgeBackend& judges,
                                 const CoefficientVector& coefficients);

struct ScoredTrajectory {
    env::Trajectory trajectory;
    RewardBreakdown breakdown;
};

// Scores a whole rollout group. A trajectory whose judge stays unavailable
// after retries is unscoreable and is excluded from the group instead of
// being guessed at; `unscoreable`, when given, receives how many were dropped.
std::vector<ScoredTrajectory> score_group(std::vector<env::Trajectory> trajectories,
                                          const kg::QueryInstance& instance,
                                          JudgeBackend& judges,
                                          const CoefficientVector& coefficients,
                                          std::size_t* unscoreable = nullptr);

enum class Phase { tool_focus, prm_focus, orm_focus, terminal };

std::string to_string(Phase p);

struct ScheduleThresholds {
    double tool = 0.9;
    double format = 0.95;
    double prm = 0.7;
    // Weight kept on a signal after its phase hands off.
    double tool_floor = 0.1;
    double format_floor = 0.1;
};

struct PhaseTransition {
    long step = 0;
    Phase from = Phase::tool_focus;
    Phase to = Phase::tool_focus;
};

struct ScheduleState {
    Phase phase = Phase::tool_focus;
    CoefficientVector coefficients = CoefficientVector::initial();
    ScheduleThresholds thresholds;
    std::vector<PhaseTransition> history;

    static ScheduleState initial(const ScheduleThresholds& thresholds = {});
};

struct ScheduleMetrics {
    long step = 0;
    double tool_success_rate = 0.0;
    double format_rate = 0.0;
    double prm_mean = 0.0;
    double orm_acc = 0.0;
};

// Threshold-triggered coefficient schedule. Transitions are monotone and fire
// in order (tool -> format -> prm gates); crossing several gates at once fires
// the transitions in sequence within one call. Idempotent when nothing new is
// crossed.
ScheduleState advance_schedule(const ScheduleState& state, const ScheduleMetrics& metrics);

// Difficulty-bin resampling: bins with outcome accuracy outside [0.1, 0.5] are
// decayed by gamma and the released mass goes to in-band bins proportionally.
// Returns proportions summing to 1; unchanged when every bin is out of band.
std::map<kg::Difficulty, double> schedule_data(
    const std::map<kg::Difficulty, double>& bin_accuracy,
    const std::map<kg::Difficulty, double>& proportions, double gamma = 0.5);

}  // namespace questlab::rewards
