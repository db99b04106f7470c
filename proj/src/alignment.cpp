#include "questlab/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "questlab/errors.hpp"
#include "questlab/text.hpp"
#include "questlab/train.hpp"

namespace questlab::align {

json Sample::to_json() const {
    return {{"input_id", input_id},
            {"trajectory", trajectory.to_json()},
            {"report", report_body},
            {"seed", seed},
            {"policy_fingerprint", policy_fingerprint}};
}

Sample Sample::from_json(const json& j) {
    Sample s;
    s.input_id = j.at("input_id").get<std::string>();
    s.trajectory = env::Trajectory::from_json(j.at("trajectory"));
    s.report_body = j.at("report").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.policy_fingerprint = j.at("policy_fingerprint").get<std::string>();
    return s;
}

std::string trajectory_report(const kg::QueryInstance& instance,
                              const env::Trajectory& trajectory) {
    std::string body = "# Findings for " + instance.id + "\n\n## Question\n\n" +
                       instance.query_text + "\n\n## Evidence\n\n";

    std::vector<std::size_t> cited_steps;
    int item = 0;
    for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
        const env::Step& step = trajectory.steps[t];
        if (!env::is_retrieval(step.action.tool) || !step.observation.ok()) continue;
        cited_steps.push_back(t);
        ++item;
        std::string snippet = step.observation.flatten();
        if (snippet.size() > 160) snippet = snippet.substr(0, 160);
        std::replace(snippet.begin(), snippet.end(), '\n', ' ');
        body += std::to_string(item) + ". " + env::to_string(step.action.tool) + " for \"" +
                step.action.argument + "\" found: " + snippet + " [" + std::to_string(item) +
                "]\n";
    }
    if (cited_steps.empty()) body += "No successful retrievals.\n";
    body += "\n## Outcome\n\n| Steps | Retrievals | Answered |\n|---|---|---|\n| " +
            std::to_string(trajectory.steps.size()) + " | " + std::to_string(cited_steps.size()) +
            " | " + (trajectory.final_answer ? "yes" : "no") + " |\n\n";

    if (trajectory.final_answer)
        body += "<final_answer>" + *trajectory.final_answer + "</final_answer>\n";
    body += "\n";
    for (std::size_t i = 0; i < cited_steps.size(); ++i)
        body += "[" + std::to_string(i + 1) + "]: step:" + std::to_string(cited_steps[i] + 1) +
                "\n";
    return body;
}

std::vector<Sample> self_sample(const policy::PolicyParams& params,
                                const std::vector<kg::QueryInstance>& inputs, int k,
                                const env::Corpus& corpus, const env::ToolLayerConfig& tools,
                                const env::RolloutLimits& limits, std::uint64_t seed) {
    require(k >= 2, "invalid-argument", "self-sampling needs k >= 2");
    std::vector<Sample> out;
    const std::string fingerprint = params.fingerprint();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (int j = 0; j < k; ++j) {
            Sample s;
            s.input_id = inputs[i].id;
            s.seed = Rng::mix(seed, 0x5E1F * (i + 1) + static_cast<std::uint64_t>(j));
            s.trajectory = env::rollout(params, inputs[i], corpus, tools, limits, s.seed);
            s.report_body = trajectory_report(inputs[i], s.trajectory);
            s.policy_fingerprint = fingerprint;
            out.push_back(std::move(s));
        }
    }
    return out;
}

bool zero_diversity(const std::vector<Sample>& samples) {
    std::map<std::string, std::set<std::string>> bodies;
    for (const Sample& s : samples) bodies[s.input_id].insert(s.report_body);
    for (const auto& [input, set] : bodies) {
        (void)input;
        if (set.size() > 1) return false;
    }
    return !samples.empty();
}

json QualityScore::to_json() const {
    return {{"judge", judge},
            {"rule", rule},
            {"combined", combined},
            {"w_judge", weights.w_judge},
            {"lambda_f", weights.lambda_f},
            {"lambda_c", weights.lambda_c},
            {"temporal_penalty", weights.temporal_penalty}};
}

QualityScore quality_score(const Sample& sample, const kg::QueryInstance& instance,
                           const report::RubricSet& rubric, const QualityWeights& weights) {
    QualityScore q;
    q.weights = weights;

    const report::Report parsed = report::Report::parse(sample.report_body);
    q.judge = report::race_score(report::rule_criterion_scores(parsed, rubric, &instance), rubric);

    // Citation counts against the trajectory's own retrievals.
    int n_ref = 0;
    std::set<std::string> seen_calls;
    for (const env::Step& s : sample.trajectory.steps)
        if (env::is_retrieval(s.action.tool) && s.observation.ok())
            if (seen_calls.insert(env::to_string(s.action.tool) + "|" + s.action.argument).second)
                ++n_ref;
    int n_gen = 0, n_valid = 0;
    for (const report::Citation& c : parsed.citations) {
        if (!c.well_formed) continue;
        ++n_gen;
        if (!c.resolved) continue;
        // Targets look like "step:<n>"; validity is relevance against that
        // step's observation.
        if (c.target.rfind("step:", 0) == 0) {
            const std::size_t idx = static_cast<std::size_t>(std::stol(c.target.substr(5))) - 1;
            if (idx < sample.trajectory.steps.size() &&
                report::citation_validity(
                    c, sample.trajectory.steps[idx].observation.flatten(), weights.tau))
                ++n_valid;
        }
    }
    const double cite = report::citation_reward(n_gen, std::min(n_valid, n_gen), n_ref);
    const double fmt = report::format_reward_report(parsed);

    report::RuleAttribution attribution;
    int temporal_errors = 0;
    for (const report::TemporalFinding& f : report::detect_temporal(
             sample.report_body, report::Date::parse(weights.now_date), attribution))
        if (f.resolved && f.is_error) ++temporal_errors;

    q.rule = weights.lambda_f * fmt + weights.lambda_c * std::min(cite, 0.0) -
             weights.temporal_penalty * temporal_errors;
    q.combined = weights.w_judge * q.judge + q.rule;
    return q;
}

std::pair<std::vector<ScoredSample>, std::vector<ScoredSample>> partition(
    const std::vector<ScoredSample>& scored, double tau_hi, double tau_lo) {
    require(tau_lo <= tau_hi, "invalid-argument", "need tau_lo <= tau_hi");
    std::vector<ScoredSample> dplus, dminus;
    for (const ScoredSample& s : scored) {
        const double v = s.score.combined;
        if (v >= tau_hi && v > tau_lo)
            dplus.push_back(s);
        else if (v <= tau_lo && v < tau_hi)
            dminus.push_back(s);
    }
    return {std::move(dplus), std::move(dminus)};
}

std::vector<PreferencePair> build_pairs(const std::vector<ScoredSample>& dplus,
                                        const std::vector<ScoredSample>& dminus) {
    std::vector<PreferencePair> pairs;
    for (const ScoredSample& hi : dplus) {
        for (const ScoredSample& lo : dminus) {
            if (hi.sample.input_id != lo.sample.input_id) continue;  // same-input pairing only
            if (!(hi.score.combined > lo.score.combined)) continue;
            PreferencePair p;
            p.input_id = hi.sample.input_id;
            p.chosen = policy::to_policy_trajectory(hi.sample.trajectory, hi.score.combined);
            p.rejected = policy::to_policy_trajectory(lo.sample.trajectory, lo.score.combined);
            p.gap = hi.score.combined - lo.score.combined;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

namespace {

double trajectory_log_prob(const policy::PolicyParams& params,
                           const policy::PolicyTrajectory& traj) {
    double lp = 0.0;
    for (const policy::PolicyStep& s : traj.steps) lp += params.log_prob(s.features, s.action);
    return lp;
}

void add_trajectory_grad(const policy::PolicyParams& params,
                         const policy::PolicyTrajectory& traj, double scale,
                         std::vector<double>& grad) {
    const int A = params.action_count();
    for (const policy::PolicyStep& s : traj.steps) {
        std::vector<double> p = params.probs(s.features);
        for (int f = 0; f < params.feature_count; ++f) {
            const double x = s.features[static_cast<std::size_t>(f)];
            if (x == 0.0) continue;
            for (int a = 0; a < A; ++a) {
                const double indicator = (a == s.action) ? 1.0 : 0.0;
                grad[static_cast<std::size_t>(f) * static_cast<std::size_t>(A) +
                     static_cast<std::size_t>(a)] +=
                    scale * x * (indicator - p[static_cast<std::size_t>(a)]);
            }
        }
    }
}

}  // namespace

policy::LossReport dpo_loss(const policy::PolicyParams& params,
                            const policy::PolicyParams& ref_params,
                            const std::vector<PreferencePair>& pairs, double beta) {
    require(beta > 0.0, "invalid-argument", "beta must be positive");
    require(!pairs.empty(), "invalid-argument", "no preference pairs");

    policy::LossReport report;
    report.gradient.assign(params.weights.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(pairs.size());

    for (const PreferencePair& pair : pairs) {
        const double margin =
            beta * ((trajectory_log_prob(params, pair.chosen) -
                     trajectory_log_prob(ref_params, pair.chosen)) -
                    (trajectory_log_prob(params, pair.rejected) -
                     trajectory_log_prob(ref_params, pair.rejected)));
        // -log sigma(m); d/dm = -sigma(-m)
        const double loss = margin > 0 ? std::log1p(std::exp(-margin))
                                       : -margin + std::log1p(std::exp(margin));
        report.value += inv_n * loss;
        const double dloss_dm = -1.0 / (1.0 + std::exp(margin));  // -sigma(-m)
        add_trajectory_grad(params, pair.chosen, inv_n * dloss_dm * beta, report.gradient);
        add_trajectory_grad(params, pair.rejected, -inv_n * dloss_dm * beta, report.gradient);
    }
    return report;
}

policy::LossReport self_sft_loss(const policy::PolicyParams& params,
                                 const std::vector<policy::PolicyTrajectory>& dplus) {
    require(!dplus.empty(), "empty-dplus", "self-SFT needs a non-empty D+");
    return policy::bc_loss(params, dplus);
}

}  // namespace questlab::align
