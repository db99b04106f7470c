#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/policyopt.hpp"
#include "questlab/train.hpp"
#include "support/fd.hpp"

using namespace questlab;
using namespace testsupport;
using policy::PolicyParams;
using policy::PolicyStep;
using policy::PolicyTrajectory;
using policy::TrajectoryGroup;

TEST_CASE("softmax policy basics") {
    Rng rng(1);
    PolicyParams p = random_params(4, 5, rng);

    std::vector<double> f = random_features(4, rng);
    std::vector<double> probs = p.probs(f);
    double sum = 0;
    for (double x : probs) sum += x;
    CHECK(std::abs(sum - 1.0) < 1e-12);

    SUBCASE("serialization round trip preserves behavior") {
        PolicyParams back = PolicyParams::from_json(p.to_json());
        CHECK(back.log_prob(f, 2) == p.log_prob(f, 2));
        CHECK(back.fingerprint() == p.fingerprint());
    }

    SUBCASE("out-of-vocabulary actions are rejected") {
        CHECK_THROWS_WITH_AS(p.log_prob(f, 99), doctest::Contains("out-of-vocabulary"), Error);
    }
}

TEST_CASE("bc_loss matches analytic expectations") {
    SUBCASE("uniform policy over V actions, one-step trajectory: loss = ln V") {
        const int V = 7;
        std::vector<policy::ActionTemplate> vocab(
            static_cast<std::size_t>(V),
            {policy::ActionTemplate::Kind::reflect, 0, "", "web_search"});
        PolicyParams uniform = PolicyParams::zeros(3, vocab);
        PolicyTrajectory t;
        t.steps.push_back({{1.0, 0.0, 0.0}, 2, 0.0});
        policy::LossReport r = policy::bc_loss(uniform, {t});
        CHECK(r.value == doctest::Approx(std::log(V)).epsilon(1e-12));
    }

    SUBCASE("a policy matching a deterministic expert approaches zero loss") {
        PolicyParams p = PolicyParams::zeros(
            2, {{policy::ActionTemplate::Kind::reflect, 0, "", "web_search"},
                {policy::ActionTemplate::Kind::reflect, 1, "", "web_search"}});
        p.at(0, 0) = 30.0;  // expert always takes action 0 on the bias feature
        PolicyTrajectory t;
        t.steps.push_back({{1.0, 0.0}, 0, 0.0});
        policy::LossReport r = policy::bc_loss(p, {t});
        CHECK(r.value < 1e-12);
        CHECK(max_abs(r.gradient) < 1e-12);
    }

    SUBCASE("expert actions outside the vocabulary raise") {
        PolicyParams p = PolicyParams::zeros(
            2, {{policy::ActionTemplate::Kind::reflect, 0, "", "web_search"}});
        PolicyTrajectory t;
        t.steps.push_back({{1.0, 0.0}, 3, 0.0});
        CHECK_THROWS_WITH_AS(policy::bc_loss(p, {t}), doctest::Contains("out-of-vocabulary"),
                             Error);
    }
}

TEST_CASE("group advantages: zero sum and shift invariance") {
    TrajectoryGroup g;
    g.query_id = "q";
    for (double r : {1.0, 0.0, 0.0, 1.0}) {
        PolicyTrajectory t;
        t.reward = r;
        t.steps.push_back({{1.0}, 0, 0.0});
        g.members.push_back(t);
    }
    CHECK(policy::group_advantages(g) == std::vector<double>{0.5, -0.5, -0.5, 0.5});

    SUBCASE("all-equal rewards collapse to zeros") {
        for (auto& m : g.members) m.reward = 0.7;
        for (double a : policy::group_advantages(g)) CHECK(a == 0.0);
    }

    SUBCASE("constant shifts cancel") {
        std::vector<double> base = policy::group_advantages(g);
        for (auto& m : g.members) m.reward += 2.5;
        std::vector<double> shifted = policy::group_advantages(g);
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(shifted[i] == doctest::Approx(base[i]).epsilon(1e-12));
    }

    SUBCASE("zero-sum over random groups") {
        Rng rng(3);
        for (int trial = 0; trial < 30; ++trial) {
            TrajectoryGroup rg;
            int n = 2 + static_cast<int>(rng.below(6));
            for (int i = 0; i < n; ++i) {
                PolicyTrajectory t;
                t.reward = rng.unit() * 3 - 1;
                t.steps.push_back({{1.0}, 0, 0.0});
                rg.members.push_back(t);
            }
            double sum = 0;
            for (double a : policy::group_advantages(rg)) sum += a;
            CHECK(std::abs(sum) <= 1e-9);
        }
    }

    SUBCASE("groups need at least two members") {
        TrajectoryGroup small;
        small.members.resize(1);
        small.members[0].steps.push_back({{1.0}, 0, 0.0});
        CHECK_THROWS_AS(policy::group_advantages(small), Error);
    }
}

TEST_CASE("grpo_loss identities") {
    Rng rng(11);
    PolicyParams params = random_params(5, 4, rng);
    std::vector<TrajectoryGroup> groups = random_groups(params, 3, 4, 4, rng);

    SUBCASE("beta=0 with zero advantages gives a zero gradient") {
        std::vector<TrajectoryGroup> flat = groups;
        for (auto& g : flat)
            for (auto& m : g.members) m.reward = 0.25;
        policy::LossReport r = policy::grpo_loss(params, params, flat, 0.0);
        CHECK(max_abs(r.gradient) < 1e-12);
    }

    SUBCASE("KL term vanishes when the policy equals the reference") {
        policy::LossReport with_kl = policy::grpo_loss(params, params, groups, 5.0);
        policy::LossReport without = policy::grpo_loss(params, params, groups, 0.0);
        CHECK(with_kl.value == doctest::Approx(without.value).epsilon(1e-12));
    }
}

TEST_CASE("gspo ratio: geometric mean of per-action ratios") {
    SUBCASE("identical parameters give exactly 1") {
        Rng rng(13);
        PolicyParams p = random_params(4, 4, rng);
        PolicyTrajectory t = random_trajectory(p, 5, rng, 1.0);
        CHECK(policy::gspo_ratio(p, p, t) == doctest::Approx(1.0).epsilon(1e-15));
    }

    SUBCASE("per-action ratios 4 and 1 give s = 2") {
        // Two disjoint feature rows so each step has its own logits.
        std::vector<policy::ActionTemplate> vocab = {
            {policy::ActionTemplate::Kind::reflect, 0, "", "web_search"},
            {policy::ActionTemplate::Kind::reflect, 1, "", "web_search"}};
        PolicyParams old_params = PolicyParams::zeros(2, vocab);
        PolicyParams new_params = PolicyParams::zeros(2, vocab);
        // State 1: old logits (ln 0.25, 0) -> p(a0) = 0.2; new (ln 4, 0) -> 0.8.
        old_params.at(0, 0) = std::log(0.25);
        new_params.at(0, 0) = std::log(4.0);
        // State 2: identical logits -> ratio 1.
        PolicyTrajectory t;
        t.steps.push_back({{1.0, 0.0}, 0, 0.0});
        t.steps.push_back({{0.0, 1.0}, 0, 0.0});
        CHECK(policy::gspo_ratio(new_params, old_params, t) ==
              doctest::Approx(2.0).epsilon(1e-12));
    }

    SUBCASE("s equals the |y|-th root of the product of per-action ratios") {
        Rng rng(17);
        for (int trial = 0; trial < 25; ++trial) {
            PolicyParams old_params = random_params(5, 4, rng);
            PolicyParams new_params = random_params(5, 4, rng);
            PolicyTrajectory t = random_trajectory(old_params, 6, rng, 0.0);
            double product = 1.0;
            for (const PolicyStep& s : t.steps)
                product *= std::exp(new_params.log_prob(s.features, s.action) -
                                    old_params.log_prob(s.features, s.action));
            const double expected =
                std::pow(product, 1.0 / static_cast<double>(t.steps.size()));
            CHECK(policy::gspo_ratio(new_params, old_params, t) ==
                  doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("gspo objective") {
    Rng rng(19);
    PolicyParams params = random_params(5, 4, rng);
    std::vector<TrajectoryGroup> groups = random_groups(params, 3, 4, 4, rng);

    SUBCASE("on-policy evaluation equals the mean advantage, which is zero") {
        policy::LossReport r = policy::gspo_objective(params, params, groups, 0.2);
        CHECK(std::abs(r.value) <= 1e-9);
        CHECK(r.mean_ratio == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("clipped members contribute the clamped constant") {
        // One group, two members; the first has ratio 1 + 2*eps with positive
        // advantage, so its contribution clamps to (1+eps)*adv.
        const double eps = 0.2;
        std::vector<policy::ActionTemplate> vocab = {
            {policy::ActionTemplate::Kind::reflect, 0, "", "web_search"},
            {policy::ActionTemplate::Kind::reflect, 1, "", "web_search"}};
        PolicyParams old_params = PolicyParams::zeros(1, vocab);  // p = (0.5, 0.5)
        PolicyParams new_params = PolicyParams::zeros(1, vocab);
        const double target = 0.5 * (1.0 + 2 * eps);  // new probability for action 0
        new_params.at(0, 0) = std::log(target / (1.0 - target));

        TrajectoryGroup g;
        g.query_id = "q";
        PolicyTrajectory hi;
        hi.reward = 1.0;
        hi.steps.push_back({{1.0}, 0, std::log(0.5)});
        PolicyTrajectory lo;
        lo.reward = 0.0;
        lo.steps.push_back({{1.0}, 1, std::log(0.5)});
        g.members = {hi, lo};

        const double s_hi = policy::gspo_ratio(new_params, old_params, hi);
        CHECK(s_hi == doctest::Approx(1.0 + 2 * eps).epsilon(1e-12));
        policy::LossReport r = policy::gspo_objective(new_params, old_params, {g}, eps);
        const double s_lo = policy::gspo_ratio(new_params, old_params, lo);
        // Both members clamp: the winner to (1+eps)*adv, the loser (whose ratio
        // fell below 1-eps with a negative advantage) to (1-eps)*adv.
        auto term = [&](double s, double adv) {
            return std::min(s * adv, std::clamp(s, 1.0 - eps, 1.0 + eps) * adv);
        };
        const double expected = 0.5 * (term(s_hi, 0.5) + term(s_lo, -0.5));
        CHECK(-r.value == doctest::Approx(expected).epsilon(1e-12));
        CHECK(-r.value == doctest::Approx(0.5 * ((1.0 + eps) * 0.5 + (1.0 - eps) * -0.5))
                              .epsilon(1e-12));
        CHECK(r.clip_fraction == doctest::Approx(1.0));
    }
}

TEST_CASE("dapo objective") {
    SUBCASE("groups with one shared reward value are discarded") {
        Rng rng(23);
        PolicyParams params = random_params(5, 4, rng);
        std::vector<TrajectoryGroup> groups = random_groups(params, 2, 4, 4, rng);
        // Give the second group mixed rewards, the first a constant.
        for (auto& m : groups[0].members) m.reward = 1.0;
        groups[1].members[0].reward = 1.0;
        groups[1].members[1].reward = 0.0;

        PolicyParams moved = params;
        for (double& w : moved.weights) w += 0.01;
        policy::LossReport with_flat =
            policy::dapo_objective(moved, params, groups, 0.2, 0.28);
        policy::LossReport without =
            policy::dapo_objective(moved, params, {groups[1]}, 0.2, 0.28);
        CHECK(with_flat.value == doctest::Approx(without.value).epsilon(1e-12));
        for (std::size_t i = 0; i < with_flat.gradient.size(); ++i)
            CHECK(with_flat.gradient[i] == doctest::Approx(without.gradient[i]).epsilon(1e-12));
    }

    SUBCASE("every group filtered raises all-groups-filtered") {
        Rng rng(29);
        PolicyParams params = random_params(4, 3, rng);
        std::vector<TrajectoryGroup> groups = random_groups(params, 2, 3, 3, rng);
        for (auto& g : groups)
            for (auto& m : g.members) m.reward = 0.5;
        CHECK_THROWS_WITH_AS(policy::dapo_objective(params, params, groups, 0.2, 0.28),
                             doctest::Contains("all-groups-filtered"), Error);
    }

    SUBCASE("on-policy value is the token-count-weighted mean advantage") {
        // Lengths 2 and 8: the token convention weighs members 2:8, unlike the
        // per-sequence mean.
        std::vector<policy::ActionTemplate> vocab = {
            {policy::ActionTemplate::Kind::reflect, 0, "", "web_search"},
            {policy::ActionTemplate::Kind::reflect, 1, "", "web_search"}};
        PolicyParams params = PolicyParams::zeros(1, vocab);
        TrajectoryGroup g;
        g.query_id = "q";
        PolicyTrajectory short_t, long_t;
        short_t.reward = 1.0;
        for (int i = 0; i < 2; ++i) short_t.steps.push_back({{1.0}, 0, std::log(0.5)});
        long_t.reward = 0.0;
        for (int i = 0; i < 8; ++i) long_t.steps.push_back({{1.0}, 1, std::log(0.5)});
        g.members = {short_t, long_t};

        policy::LossReport r = policy::dapo_objective(params, params, {g}, 0.2, 0.28);
        // Advantages are +0.5 and -0.5; token weighting gives
        // (2*0.5 + 8*(-0.5)) / 10 = -0.3.
        CHECK(-r.value == doctest::Approx(-0.3).epsilon(1e-12));
        // The per-sequence-mean oracle would give (0.5 - 0.5) / 2 = 0 instead.
        double sequence_mean = 0.0;
        for (std::size_t i = 0; i < g.members.size(); ++i)
            sequence_mean += policy::group_advantages(g)[i] / 2.0;
        CHECK(std::abs(-r.value - sequence_mean) > 0.2);
    }
}

TEST_CASE("finite-difference gradient checks per objective") {
    Rng rng(31);
    const double tol = 1e-5;

    SUBCASE("bc_loss") {
        for (int trial = 0; trial < 4; ++trial) {
            PolicyParams params = random_params(5, 4, rng);
            std::vector<PolicyTrajectory> experts = {random_trajectory(params, 5, rng, 0.0),
                                                     random_trajectory(params, 5, rng, 0.0)};
            policy::LossReport r = policy::bc_loss(params, experts);
            auto fd = fd_gradient(
                [&](const PolicyParams& p) { return policy::bc_loss(p, experts).value; },
                params);
            CHECK(relative_gradient_error(r.gradient, fd) < tol);
        }
    }

    SUBCASE("grpo_loss") {
        for (int trial = 0; trial < 4; ++trial) {
            PolicyParams params = random_params(5, 4, rng);
            PolicyParams ref = random_params(5, 4, rng);
            std::vector<TrajectoryGroup> groups = random_groups(params, 2, 3, 4, rng);
            policy::LossReport r = policy::grpo_loss(params, ref, groups, 0.3);
            auto fd = fd_gradient(
                [&](const PolicyParams& p) { return policy::grpo_loss(p, ref, groups, 0.3).value; },
                params);
            CHECK(relative_gradient_error(r.gradient, fd) < tol);
        }
    }

    SUBCASE("gspo_objective away from clip kinks") {
        for (int trial = 0; trial < 4; ++trial) {
            PolicyParams old_params = random_params(5, 4, rng, 0.3);
            PolicyParams params = old_params;
            for (double& w : params.weights) w += 0.02 * (rng.unit() - 0.5);
            std::vector<TrajectoryGroup> groups = random_groups(old_params, 2, 3, 4, rng);
            policy::LossReport r = policy::gspo_objective(params, old_params, groups, 0.5);
            CHECK(r.clip_fraction == 0.0);  // wide clip, tiny perturbation
            auto fd = fd_gradient(
                [&](const PolicyParams& p) {
                    return policy::gspo_objective(p, old_params, groups, 0.5).value;
                },
                params);
            CHECK(relative_gradient_error(r.gradient, fd) < tol);
        }
    }

    SUBCASE("dapo_objective away from clip kinks") {
        for (int trial = 0; trial < 4; ++trial) {
            PolicyParams old_params = random_params(5, 4, rng, 0.3);
            PolicyParams params = old_params;
            for (double& w : params.weights) w += 0.02 * (rng.unit() - 0.5);
            std::vector<TrajectoryGroup> groups = random_groups(old_params, 2, 3, 4, rng);
            policy::LossReport r = policy::dapo_objective(params, old_params, groups, 0.4, 0.5);
            auto fd = fd_gradient(
                [&](const PolicyParams& p) {
                    return policy::dapo_objective(p, old_params, groups, 0.4, 0.5).value;
                },
                params);
            CHECK(relative_gradient_error(r.gradient, fd) < tol);
        }
    }
}

TEST_CASE("sft stop threshold") {
    SUBCASE("all trajectories required: closed form 1 - c^(1/G)") {
        double p = policy::sft_stop_threshold({8, 8, 0.95});
        CHECK(p == doctest::Approx(1.0 - std::pow(0.95, 1.0 / 8.0)).epsilon(1e-7));
    }

    SUBCASE("one trajectory required: closed form (1-c)^(1/G)") {
        double p = policy::sft_stop_threshold({8, 1, 0.95});
        CHECK(p == doctest::Approx(std::pow(0.05, 1.0 / 8.0)).epsilon(1e-7));
    }

    SUBCASE("the bound tightens as confidence grows") {
        double last = 1.0;
        for (double conf : {0.5, 0.8, 0.9, 0.95, 0.99}) {
            double p = policy::sft_stop_threshold({8, 2, conf});
            CHECK(p < last);
            last = p;
        }
    }

    SUBCASE("the returned bound satisfies the criterion and is maximal") {
        policy::StopCriterionConfig cfg{8, 2, 0.95};
        double p = policy::sft_stop_threshold(cfg);
        CHECK(policy::binomial_at_least(8, 2, 1.0 - p) >= 0.95 - 1e-9);
        CHECK(policy::binomial_at_least(8, 2, 1.0 - (p + 1e-6)) < 0.95);
    }
}

TEST_CASE("train loop basics") {
    kg::KnowledgeGraph graph = fixtures::demo_graph();
    kg::SynthOptions options;
    options.hops = 2;
    options.count = 12;
    options.seed = 5;
    std::vector<kg::QueryInstance> instances =
        kg::synthesize(graph, fixtures::demo_template_bank(), options);
    std::vector<kg::QueryInstance> train_set(instances.begin(), instances.begin() + 8);
    std::vector<kg::QueryInstance> holdout(instances.begin() + 8, instances.end());

    PolicyParams init = PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));

    SUBCASE("zero optimizer steps leave the parameters unchanged") {
        policy::TrainConfig cfg;
        cfg.steps = 0;
        policy::TrainResult r = policy::train(init, graph, train_set, holdout, cfg);
        CHECK(r.params.weights == init.weights);
        CHECK(r.metrics.empty());
    }

    SUBCASE("identical config and seed give bit-identical metrics logs") {
        policy::TrainConfig cfg;
        cfg.steps = 6;
        cfg.seed = 99;
        policy::TrainResult a = policy::train(init, graph, train_set, holdout, cfg);
        policy::TrainResult b = policy::train(init, graph, train_set, holdout, cfg);
        CHECK(a.metrics_csv() == b.metrics_csv());
        CHECK(a.schedule_csv() == b.schedule_csv());
        CHECK(a.params.weights == b.params.weights);
    }

    SUBCASE("objective validation") {
        policy::TrainConfig cfg;
        cfg.objective = "ppo";
        CHECK_THROWS_AS(policy::train(init, graph, train_set, holdout, cfg), Error);
    }
}
