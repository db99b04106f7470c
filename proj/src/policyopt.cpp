#include "questlab/policyopt.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "questlab/errors.hpp"
#include "questlab/jsonl.hpp"
#include "questlab/text.hpp"

namespace questlab::policy {

namespace {

const char* kind_name(ActionTemplate::Kind k) {
    switch (k) {
        case ActionTemplate::Kind::search_start: return "search_start";
        case ActionTemplate::Kind::search_hop: return "search_hop";
        case ActionTemplate::Kind::search_key_entity: return "search_key_entity";
        case ActionTemplate::Kind::search_literal: return "search_literal";
        case ActionTemplate::Kind::crawl_top: return "crawl_top";
        case ActionTemplate::Kind::reflect: return "reflect";
        case ActionTemplate::Kind::answer_top: return "answer_top";
        case ActionTemplate::Kind::answer_literal: return "answer_literal";
        case ActionTemplate::Kind::raw_literal: return "raw_literal";
    }
    return "reflect";
}

ActionTemplate::Kind kind_from_name(const std::string& s) {
    for (int k = 0; k <= static_cast<int>(ActionTemplate::Kind::raw_literal); ++k)
        if (s == kind_name(static_cast<ActionTemplate::Kind>(k)))
            return static_cast<ActionTemplate::Kind>(k);
    raise("parse-error", "unknown action kind '" + s + "'");
}

void check_features(const PolicyParams& p, const std::vector<double>& features) {
    require(static_cast<int>(features.size()) == p.feature_count, "invalid-argument",
            "feature vector size " + std::to_string(features.size()) + " != " +
                std::to_string(p.feature_count));
}

double entropy_of(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0) h -= p * std::log(p);
    return h;
}

}  // namespace

std::string ActionTemplate::name() const {
    std::string n = kind_name(kind);
    if (kind == Kind::search_hop || kind == Kind::search_key_entity)
        n += "_" + std::to_string(index);
    return n;
}

json ActionTemplate::to_json() const {
    json j = {{"kind", kind_name(kind)}};
    if (index != 0) j["index"] = index;
    if (!literal.empty()) j["literal"] = literal;
    if (tool != "web_search") j["tool"] = tool;
    return j;
}

ActionTemplate ActionTemplate::from_json(const json& j) {
    ActionTemplate t;
    t.kind = kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("index")) t.index = j.at("index").get<int>();
    if (j.contains("literal")) t.literal = j.at("literal").get<std::string>();
    if (j.contains("tool")) t.tool = j.at("tool").get<std::string>();
    return t;
}

std::vector<ActionTemplate> demo_vocabulary(int hops) {
    std::vector<ActionTemplate> v;
    v.push_back({ActionTemplate::Kind::search_start, 0, "", "web_search"});
    for (int h = 1; h <= hops; ++h)
        v.push_back({ActionTemplate::Kind::search_hop, h, "", "web_search"});
    v.push_back({ActionTemplate::Kind::crawl_top, 0, "", "web_search"});
    v.push_back({ActionTemplate::Kind::reflect, 0, "", "web_search"});
    v.push_back({ActionTemplate::Kind::answer_top, 0, "", "web_search"});
    return v;
}

PolicyParams PolicyParams::zeros(int feature_count, std::vector<ActionTemplate> vocabulary) {
    require(feature_count > 0, "invalid-argument", "feature count must be positive");
    require(!vocabulary.empty(), "invalid-argument", "vocabulary must be non-empty");
    PolicyParams p;
    p.feature_count = feature_count;
    p.vocabulary = std::move(vocabulary);
    p.weights.assign(static_cast<std::size_t>(feature_count) * p.vocabulary.size(), 0.0);
    return p;
}

std::vector<double> PolicyParams::logits(const std::vector<double>& features) const {
    check_features(*this, features);
    const int A = action_count();
    std::vector<double> z(static_cast<std::size_t>(A), 0.0);
    for (int f = 0; f < feature_count; ++f) {
        const double x = features[static_cast<std::size_t>(f)];
        if (x == 0.0) continue;
        for (int a = 0; a < A; ++a) z[static_cast<std::size_t>(a)] += x * at(f, a);
    }
    return z;
}

std::vector<double> PolicyParams::log_probs(const std::vector<double>& features) const {
    std::vector<double> z = logits(features);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    for (double& v : z) v -= lse;
    return z;
}

std::vector<double> PolicyParams::probs(const std::vector<double>& features) const {
    std::vector<double> lp = log_probs(features);
    for (double& v : lp) v = std::exp(v);
    return lp;
}

double PolicyParams::log_prob(const std::vector<double>& features, int action) const {
    require(action >= 0 && action < action_count(), "out-of-vocabulary",
            "action index " + std::to_string(action));
    return log_probs(features)[static_cast<std::size_t>(action)];
}

int PolicyParams::sample(const std::vector<double>& features, Rng& rng) const {
    std::vector<double> p = probs(features);
    double u = rng.unit();
    double acc = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        acc += p[a];
        if (u < acc) return static_cast<int>(a);
    }
    return static_cast<int>(p.size()) - 1;
}

int PolicyParams::argmax(const std::vector<double>& features) const {
    std::vector<double> z = logits(features);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

json PolicyParams::to_json() const {
    json vocab = json::array();
    for (const auto& a : vocabulary) vocab.push_back(a.to_json());
    return {{"format", "questlab-policy"},
            {"version", 1},
            {"feature_count", feature_count},
            {"vocabulary", vocab},
            {"weights", weights}};
}

PolicyParams PolicyParams::from_json(const json& j) {
    if (j.value("format", "") != "questlab-policy")
        raise("parse-error", "not a policy file");
    if (j.value("version", 0) != 1)
        raise("version-mismatch", "unsupported policy version");
    PolicyParams p;
    p.feature_count = j.at("feature_count").get<int>();
    for (const auto& a : j.at("vocabulary")) p.vocabulary.push_back(ActionTemplate::from_json(a));
    p.weights = j.at("weights").get<std::vector<double>>();
    require(p.weights.size() ==
                static_cast<std::size_t>(p.feature_count) * p.vocabulary.size(),
            "parse-error", "weight matrix shape mismatch");
    for (double w : p.weights)
        require(std::isfinite(w), "parse-error", "non-finite weight in policy file");
    return p;
}

void PolicyParams::save(const std::string& path) const {
    jsonl::write_text_file(path, to_json().dump(2) + "\n");
}

PolicyParams PolicyParams::load(const std::string& path) {
    return from_json(json::parse(jsonl::read_text_file(path)));
}

std::string PolicyParams::fingerprint() const { return text::fnv1a_hex(to_json().dump()); }

json PolicyTrajectory::to_json() const {
    json steps_j = json::array();
    for (const PolicyStep& s : steps)
        steps_j.push_back(
            {{"features", s.features}, {"action", s.action}, {"logprob_old", s.logprob_old}});
    return {{"query_id", query_id}, {"reward", reward}, {"steps", steps_j}};
}

PolicyTrajectory PolicyTrajectory::from_json(const json& j) {
    PolicyTrajectory t;
    t.query_id = j.at("query_id").get<std::string>();
    t.reward = j.at("reward").get<double>();
    for (const auto& s : j.at("steps"))
        t.steps.push_back({s.at("features").get<std::vector<double>>(), s.at("action").get<int>(),
                           s.at("logprob_old").get<double>()});
    return t;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

// grad += scale * d(log pi(action | features))/dW
void add_logprob_grad(const PolicyParams& params, const std::vector<double>& features,
                      int action, double scale, std::vector<double>& grad) {
    const int A = params.action_count();
    std::vector<double> p = params.probs(features);
    for (int f = 0; f < params.feature_count; ++f) {
        const double x = features[static_cast<std::size_t>(f)];
        if (x == 0.0) continue;
        for (int a = 0; a < A; ++a) {
            const double indicator = (a == action) ? 1.0 : 0.0;
            grad[static_cast<std::size_t>(f) * static_cast<std::size_t>(A) +
                 static_cast<std::size_t>(a)] += scale * x * (indicator - p[static_cast<std::size_t>(a)]);
        }
    }
}

double trajectory_log_prob(const PolicyParams& params, const PolicyTrajectory& traj) {
    double lp = 0.0;
    for (const PolicyStep& s : traj.steps) lp += params.log_prob(s.features, s.action);
    return lp;
}

void validate_groups(const std::vector<TrajectoryGroup>& groups) {
    require(!groups.empty(), "invalid-argument", "no trajectory groups");
    for (const auto& g : groups) {
        require(g.members.size() >= 2, "invalid-argument",
                "group for " + g.query_id + " has fewer than 2 members");
        for (const auto& m : g.members)
            require(!m.steps.empty(), "invalid-argument", "empty trajectory in group");
    }
}

}  // namespace

LossReport bc_loss(const PolicyParams& params, const std::vector<PolicyTrajectory>& experts) {
    require(!experts.empty(), "invalid-argument", "no expert trajectories");
    LossReport report;
    report.gradient.assign(params.weights.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(experts.size());

    double entropy_sum = 0.0;
    std::size_t states = 0;
    for (const PolicyTrajectory& traj : experts) {
        for (const PolicyStep& s : traj.steps) {
            require(s.action >= 0 && s.action < params.action_count(), "out-of-vocabulary",
                    "expert action " + std::to_string(s.action) + " outside vocabulary");
            report.value -= inv_n * params.log_prob(s.features, s.action);
            add_logprob_grad(params, s.features, s.action, -inv_n, report.gradient);
            entropy_sum += entropy_of(params.probs(s.features));
            ++states;
        }
    }
    report.entropy = states ? entropy_sum / static_cast<double>(states) : 0.0;
    return report;
}

std::vector<double> group_advantages(const TrajectoryGroup& group) {
    require(group.members.size() >= 2, "invalid-argument", "group needs at least 2 members");
    double mean = 0.0;
    for (const auto& m : group.members) mean += m.reward;
    mean /= static_cast<double>(group.members.size());
    std::vector<double> adv;
    adv.reserve(group.members.size());
    for (const auto& m : group.members) adv.push_back(m.reward - mean);
    return adv;
}

LossReport grpo_loss(const PolicyParams& params, const PolicyParams& ref,
                     const std::vector<TrajectoryGroup>& groups, double beta) {
    validate_groups(groups);
    require(beta >= 0.0, "invalid-argument", "beta must be >= 0");

    LossReport report;
    report.gradient.assign(params.weights.size(), 0.0);
    const int A = params.action_count();

    std::size_t member_count = 0;
    for (const auto& g : groups) member_count += g.members.size();
    const double inv_members = 1.0 / static_cast<double>(member_count);

    // Surrogate term: mean over members of advantage * trajectory log-prob.
    double objective = 0.0;
    for (const auto& g : groups) {
        std::vector<double> adv = group_advantages(g);
        for (std::size_t i = 0; i < g.members.size(); ++i) {
            objective += inv_members * adv[i] * trajectory_log_prob(params, g.members[i]);
            for (const PolicyStep& s : g.members[i].steps)
                add_logprob_grad(params, s.features, s.action, inv_members * adv[i],
                                 report.gradient);
        }
    }

    // Exact categorical KL to the reference, averaged over visited states.
    std::size_t states = 0;
    for (const auto& g : groups)
        for (const auto& m : g.members) states += m.steps.size();
    const double inv_states = 1.0 / static_cast<double>(states);

    double kl_total = 0.0;
    double entropy_sum = 0.0;
    std::vector<double> kl_grad(params.weights.size(), 0.0);
    for (const auto& g : groups) {
        for (const auto& m : g.members) {
            for (const PolicyStep& s : m.steps) {
                std::vector<double> lp = params.log_probs(s.features);
                std::vector<double> lr = ref.log_probs(s.features);
                std::vector<double> p(lp.size());
                double kl = 0.0;
                for (std::size_t a = 0; a < lp.size(); ++a) {
                    p[a] = std::exp(lp[a]);
                    kl += p[a] * (lp[a] - lr[a]);
                }
                kl_total += kl * inv_states;
                entropy_sum += entropy_of(p);
                for (int f = 0; f < params.feature_count; ++f) {
                    const double x = s.features[static_cast<std::size_t>(f)];
                    if (x == 0.0) continue;
                    for (int a = 0; a < A; ++a)
                        kl_grad[static_cast<std::size_t>(f) * static_cast<std::size_t>(A) +
                                static_cast<std::size_t>(a)] +=
                            inv_states * x * p[static_cast<std::size_t>(a)] *
                            ((lp[static_cast<std::size_t>(a)] - lr[static_cast<std::size_t>(a)]) - kl);
                }
            }
        }
    }
    objective -= beta * kl_total;

    report.value = -objective;
    for (std::size_t i = 0; i < report.gradient.size(); ++i)
        report.gradient[i] = -(report.gradient[i] - beta * kl_grad[i]);
    report.entropy = entropy_sum * inv_states;
    return report;
}

double gspo_ratio(const PolicyParams& params, const PolicyParams& old_params,
                  const PolicyTrajectory& trajectory) {
    require(!trajectory.steps.empty(), "invalid-argument", "empty trajectory");
    double sum = 0.0;
    for (const PolicyStep& s : trajectory.steps)
        sum += params.log_prob(s.features, s.action) - old_params.log_prob(s.features, s.action);
    return std::exp(sum / static_cast<double>(trajectory.steps.size()));
}

LossReport gspo_objective(const PolicyParams& params, const PolicyParams& old_params,
                          const std::vector<TrajectoryGroup>& groups, double epsilon) {
    validate_groups(groups);
    require(epsilon > 0.0, "invalid-argument", "epsilon must be positive");

    LossReport report;
    report.gradient.assign(params.weights.size(), 0.0);

    double objective = 0.0;
    double ratio_sum = 0.0;
    std::size_t member_total = 0, clipped = 0;
    const double inv_groups = 1.0 / static_cast<double>(groups.size());

    for (const auto& g : groups) {
        std::vector<double> adv = group_advantages(g);
        const double inv_g = 1.0 / static_cast<double>(g.members.size());
        for (std::size_t i = 0; i < g.members.size(); ++i) {
            const double s = gspo_ratio(params, old_params, g.members[i]);
            const double a = adv[i];
            const double unclipped = s * a;
            const double clamped = std::clamp(s, 1.0 - epsilon, 1.0 + epsilon) * a;
            objective += inv_groups * inv_g * std::min(unclipped, clamped);
            ratio_sum += s;
            ++member_total;

            const bool blocked = (a > 0 && s > 1.0 + epsilon) || (a < 0 && s < 1.0 - epsilon);
            if (blocked) {
                ++clipped;
                continue;
            }
            // d(s*a)/dW = a * s * (1/|y|) * sum_t dlogpi/dW
            const double scale =
                inv_groups * inv_g * a * s / static_cast<double>(g.members[i].steps.size());
            for (const PolicyStep& st : g.members[i].steps)
                add_logprob_grad(params, st.features, st.action, scale, report.gradient);
        }
    }

    report.value = -objective;
    for (double& v : report.gradient) v = -v;
    report.clip_fraction = member_total ? static_cast<double>(clipped) / member_total : 0.0;
    report.mean_ratio = member_total ? ratio_sum / static_cast<double>(member_total) : 1.0;
    return report;
}

LossReport dapo_objective(const PolicyParams& params, const PolicyParams& old_params,
                          const std::vector<TrajectoryGroup>& groups, double epsilon_low,
                          double epsilon_high) {
    validate_groups(groups);
    require(epsilon_low < epsilon_high, "invalid-argument", "need epsilon_low < epsilon_high");
    require(epsilon_low > 0.0, "invalid-argument", "epsilon_low must be positive");

    // Dynamic sampling filter: drop zero-signal groups.
    std::vector<const TrajectoryGroup*> retained;
    for (const auto& g : groups) {
        bool all_same = true;
        for (const auto& m : g.members)
            if (m.reward != g.members.front().reward) all_same = false;
        if (!all_same) retained.push_back(&g);
    }
    if (retained.empty())
        raise("all-groups-filtered", "every group has a single shared reward value");

    std::size_t total_actions = 0;
    for (const auto* g : retained)
        for (const auto& m : g->members) total_actions += m.steps.size();
    const double inv_actions = 1.0 / static_cast<double>(total_actions);

    LossReport report;
    report.gradient.assign(params.weights.size(), 0.0);

    double objective = 0.0;
    double ratio_sum = 0.0;
    std::size_t token_count = 0, clipped = 0;

    for (const auto* g : retained) {
        std::vector<double> adv = group_advantages(*g);
        for (std::size_t i = 0; i < g->members.size(); ++i) {
            const double a = adv[i];
            for (const PolicyStep& st : g->members[i].steps) {
                const double r = std::exp(params.log_prob(st.features, st.action) -
                                          old_params.log_prob(st.features, st.action));
                const double unclipped = r * a;
                const double clamped =
                    std::clamp(r, 1.0 - epsilon_low, 1.0 + epsilon_high) * a;
                objective += inv_actions * std::min(unclipped, clamped);
                ratio_sum += r;
                ++token_count;

                const bool blocked =
                    (a > 0 && r > 1.0 + epsilon_high) || (a < 0 && r < 1.0 - epsilon_low);
                if (blocked) {
                    ++clipped;
                    continue;
                }
                add_logprob_grad(params, st.features, st.action, inv_actions * a * r,
                                 report.gradient);
            }
        }
    }

    report.value = -objective;
    for (double& v : report.gradient) v = -v;
    report.clip_fraction = token_count ? static_cast<double>(clipped) / token_count : 0.0;
    report.mean_ratio = token_count ? ratio_sum / static_cast<double>(token_count) : 1.0;
    return report;
}

double binomial_at_least(int n, int k, double success_p) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    double q = 1.0 - success_p;
    // Sum P(X = j) for j in [k, n] with incremental binomial coefficients.
    double total = 0.0;
    double coeff = 1.0;  // C(n, 0)
    std::vector<double> terms(static_cast<std::size_t>(n) + 1, 0.0);
    for (int j = 0; j <= n; ++j) {
        if (j > 0) coeff = coeff * (n - j + 1) / j;
        terms[static_cast<std::size_t>(j)] =
            coeff * std::pow(success_p, j) * std::pow(q, n - j);
    }
    for (int j = k; j <= n; ++j) total += terms[static_cast<std::size_t>(j)];
    return std::min(1.0, total);
}

double sft_stop_threshold(const StopCriterionConfig& cfg) {
    require(cfg.trials >= 1, "invalid-argument", "trials must be >= 1");
    require(cfg.min_valid >= 1 && cfg.min_valid <= cfg.trials, "invalid-argument",
            "min_valid must be in [1, trials]");
    require(cfg.confidence > 0.0 && cfg.confidence < 1.0, "invalid-argument",
            "confidence must be in (0,1)");

    auto satisfied = [&](double p) {
        return binomial_at_least(cfg.trials, cfg.min_valid, 1.0 - p) >= cfg.confidence;
    };
    if (!satisfied(0.0)) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-9) {
        double mid = 0.5 * (lo + hi);
        if (satisfied(mid))
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace questlab::policy
