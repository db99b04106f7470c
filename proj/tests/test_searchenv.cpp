#include <doctest.h>

#include <functional>

#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/rewards.hpp"
#include "questlab/searchenv.hpp"
#include "questlab/text.hpp"

using namespace questlab;
using policy::ActionTemplate;
using Kind = policy::ActionTemplate::Kind;

namespace {

const kg::KnowledgeGraph& demo() {
    static kg::KnowledgeGraph g = fixtures::demo_graph();
    return g;
}

const env::Corpus& demo_corpus() {
    static env::Corpus corpus(demo());
    return corpus;
}

kg::QueryInstance demo_instance(int hops = 2, std::uint64_t seed = 42) {
    kg::SynthOptions options;
    options.hops = hops;
    options.count = 1;
    options.seed = seed;
    return kg::synthesize(demo(), fixtures::demo_template_bank(), options).front();
}

kg::KnowledgeGraph tiny_graph() {
    using kg::json;
    std::vector<json> records = {
        json{{"kind", "entity"}, {"id", "x1"}, {"name", "Quarry Lodge"}},
        json{{"kind", "entity"}, {"id", "x2"}, {"name", "Harbor Lodge"}},
        json{{"kind", "entity"}, {"id", "x3"}, {"name", "Meadow Lodge"}},
        json{{"kind", "document"}, {"entity", "x1"}, {"text", "Quarry Lodge mines granite slabs"}},
        json{{"kind", "document"}, {"entity", "x2"}, {"text", "Harbor Lodge ships granite"}},
        json{{"kind", "document"}, {"entity", "x3"}, {"text", "Meadow Lodge grows clover"}},
    };
    return kg::KnowledgeGraph::from_records(records);
}

}  // namespace

TEST_CASE("search ranks by unique token overlap with id tie-breaking") {
    kg::KnowledgeGraph g = tiny_graph();
    env::Corpus corpus(g);

    SUBCASE("self retrieval ranks first") {
        std::vector<env::Snippet> hits = corpus.search("web", g.document("x1"), 3);
        REQUIRE(!hits.empty());
        CHECK(hits.front().entity == "x1");
    }

    SUBCASE("hand-computed overlap ordering") {
        // "granite slabs" overlaps {x1: 2, x2: 1, x3: 0}.
        std::vector<env::Snippet> hits = corpus.search("web", "granite slabs", 3);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].entity == "x1");
        CHECK(hits[0].score == 2);
        CHECK(hits[1].entity == "x2");
        CHECK(hits[1].score == 1);
        CHECK(hits[2].entity == "x3");
        CHECK(hits[2].score == 0);
    }

    SUBCASE("zero-overlap queries return k results in id order") {
        std::vector<env::Snippet> hits = corpus.search("web", "zzz qqq", 3);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].entity == "x1");
        CHECK(hits[1].entity == "x2");
        CHECK(hits[2].entity == "x3");
        for (const env::Snippet& s : hits) CHECK(s.score == 0);
    }

    SUBCASE("empty partition raises empty-corpus") {
        CHECK_THROWS_WITH_AS(corpus.search("academic", "granite", 1), doctest::Contains("empty-corpus"),
                             Error);
    }
}

TEST_CASE("crawl returns the full document, a superset of any snippet") {
    const env::Corpus& corpus = demo_corpus();
    const kg::EntityId id = demo().entities().front().id;
    const std::string& doc = corpus.crawl(id);
    CHECK(doc == corpus.crawl(id));  // byte-identical across calls

    std::vector<env::Snippet> hits = corpus.search("web", doc, 1);
    REQUIRE(!hits.empty());
    CHECK(hits.front().entity == id);
    CHECK(doc.rfind(hits.front().text, 0) == 0);  // snippet is a prefix

    CHECK_THROWS_AS((void)corpus.crawl("nope"), Error);
}

TEST_CASE("tool session: cache, retries, rate limit") {
    env::ToolLayerConfig cfg;

    SUBCASE("identical calls hit the cache with byte-identical payloads") {
        env::ToolSession session(demo_corpus(), cfg, Rng(1));
        env::ToolCall call{env::Tool::web_search, "relay network", 1};
        env::Observation first = session.execute(call);
        env::Observation second = session.execute(call);
        CHECK_FALSE(first.from_cache);
        CHECK(second.from_cache);
        CHECK(second.flatten() == first.flatten());
        CHECK(second.latency_ticks == 0);
    }

    SUBCASE("forced failures exhaust retries after exactly max_retries+1 attempts") {
        cfg.failure_injection_rate = 1.0;
        cfg.max_retries = 2;
        env::ToolSession session(demo_corpus(), cfg, Rng(2));
        env::Observation obs = session.execute({env::Tool::web_search, "anything", 1});
        CHECK(obs.status == env::Observation::Status::error);
        CHECK(obs.latency_ticks == 3);
        CHECK(obs.text.find("exhausted-retries") != std::string::npos);
    }

    SUBCASE("rate limit produces a clear diagnostic") {
        cfg.rate_limit = 2;
        env::ToolSession session(demo_corpus(), cfg, Rng(3));
        CHECK(session.execute({env::Tool::web_search, "one", 1}).ok());
        CHECK(session.execute({env::Tool::web_search, "two", 2}).ok());
        env::Observation third = session.execute({env::Tool::web_search, "three", 3});
        CHECK_FALSE(third.ok());
        CHECK(third.text.find("rate-limited") != std::string::npos);
        // Another tool still has budget.
        CHECK(session.execute({env::Tool::crawl, "e00", 4}).ok());
    }

    SUBCASE("zero injection rate means zero tool errors over many calls") {
        cfg.failure_injection_rate = 0.0;
        cfg.cache_capacity = 0;  // force real executions
        cfg.rate_limit = 20000;
        env::ToolSession session(demo_corpus(), cfg, Rng(4));
        int errors = 0;
        for (int i = 0; i < 10000; ++i) {
            env::Observation obs =
                session.execute({env::Tool::web_search, "probe " + std::to_string(i), i + 1});
            if (!obs.ok()) ++errors;
        }
        CHECK(errors == 0);
    }

    SUBCASE("answer and reflect are not routable") {
        env::ToolSession session(demo_corpus(), cfg, Rng(5));
        CHECK_THROWS_WITH_AS(session.execute({env::Tool::answer, "x", 1}),
                             doctest::Contains("unknown-tool"), Error);
    }

    SUBCASE("unknown crawl target yields clear error feedback") {
        env::ToolSession session(demo_corpus(), cfg, Rng(6));
        env::Observation obs = session.execute({env::Tool::crawl, "missing-entity", 1});
        CHECK_FALSE(obs.ok());
        CHECK(!obs.text.empty());
    }
}

TEST_CASE("step_format_valid accepts exactly one well-formed call") {
    CHECK(env::step_format_valid(R"({"tool":"web_search","argument":"granite"})"));
    CHECK(env::step_format_valid(R"({"tool":"reflect","argument":""})"));
    CHECK(env::step_format_valid(R"({"tool":"answer","argument":"Quarry Lodge"})"));
    // Two actions in one emission.
    CHECK_FALSE(env::step_format_valid(
        R"([{"tool":"web_search","argument":"a"},{"tool":"crawl","argument":"b"}])"));
    // Required-field rule: answers must carry content.
    CHECK_FALSE(env::step_format_valid(R"({"tool":"answer","argument":""})"));
    CHECK_FALSE(env::step_format_valid(R"({"tool":"warp","argument":"x"})"));
    CHECK_FALSE(env::step_format_valid(R"({"tool":"web_search"})"));
    CHECK_FALSE(env::step_format_valid("not json at all"));
}

TEST_CASE("rollout mechanics") {
    kg::QueryInstance instance = demo_instance();
    env::ToolLayerConfig cfg;
    env::RolloutLimits limits;

    SUBCASE("an immediate answer yields a one-step trajectory") {
        std::vector<ActionTemplate> script = {{Kind::answer_literal, 0, "whatever", "web_search"}};
        env::Trajectory t =
            env::rollout_scripted(script, instance, demo_corpus(), cfg, limits, 1);
        CHECK(t.steps.size() == 1);
        REQUIRE(t.final_answer.has_value());
        CHECK(*t.final_answer == "whatever");
    }

    SUBCASE("empty answers are invalid and terminate without a final answer") {
        std::vector<ActionTemplate> script = {{Kind::answer_top, 0, "", "web_search"}};
        env::Trajectory t =
            env::rollout_scripted(script, instance, demo_corpus(), cfg, limits, 1);
        REQUIRE(t.steps.size() == 1);
        CHECK_FALSE(t.steps[0].format_valid);
        CHECK(t.steps[0].tool_success == 0);
        CHECK_FALSE(t.final_answer.has_value());
    }

    SUBCASE("unparseable emissions are recorded as invalid steps") {
        std::vector<ActionTemplate> script = {{Kind::raw_literal, 0, "###", "web_search"},
                                              {Kind::answer_literal, 0, "x", "web_search"}};
        env::Trajectory t =
            env::rollout_scripted(script, instance, demo_corpus(), cfg, limits, 1);
        REQUIRE(t.steps.size() == 2);
        CHECK_FALSE(t.steps[0].format_valid);
        CHECK(t.steps[0].observation.status == env::Observation::Status::error);
    }

    SUBCASE("stochastic rollouts respect the step limit") {
        policy::PolicyParams uniform =
            policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));
        limits.max_steps = 5;
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            env::Trajectory t =
                env::rollout(uniform, instance, demo_corpus(), cfg, limits, seed);
            CHECK(t.steps.size() >= 1);
            CHECK(t.steps.size() <= 5);
            int answers = 0;
            for (std::size_t i = 0; i < t.steps.size(); ++i) {
                if (t.steps[i].action.tool == env::Tool::answer) {
                    ++answers;
                    CHECK(i + 1 == t.steps.size());  // only at the final step
                }
            }
            CHECK(answers <= 1);
        }
    }

    SUBCASE("replay determinism: same seed, same trajectory") {
        policy::PolicyParams uniform =
            policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));
        env::Trajectory a = env::rollout(uniform, instance, demo_corpus(), cfg, limits, 99);
        env::Trajectory b = env::rollout(uniform, instance, demo_corpus(), cfg, limits, 99);
        CHECK(a.to_json() == b.to_json());
        env::Trajectory c = env::rollout(uniform, instance, demo_corpus(), cfg, limits, 100);
        CHECK(a.to_json() != c.to_json());
    }

    SUBCASE("log probs recompute from features within 1e-12") {
        policy::PolicyParams uniform =
            policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));
        env::Trajectory t = env::rollout(uniform, instance, demo_corpus(), cfg, limits, 7);
        REQUIRE(t.action_log_probs.size() == t.steps.size());
        REQUIRE(t.features.size() == t.steps.size());
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            const double recomputed =
                uniform.probs(t.features[i])[static_cast<std::size_t>(t.action_indices[i])];
            CHECK(std::abs(std::exp(t.action_log_probs[i]) - recomputed) < 1e-12);
        }
    }

    SUBCASE("oracle policy searching each key entity reaches full coverage") {
        std::vector<ActionTemplate> script;
        for (int j = 0; j < static_cast<int>(instance.entity_set.size()); ++j)
            script.push_back({Kind::search_key_entity, j, "", "web_search"});
        script.push_back({Kind::answer_top, 0, "", "web_search"});
        env::Trajectory t =
            env::rollout_scripted(script, instance, demo_corpus(), cfg, limits, 11);
        CHECK(rewards::prm(t, instance.entity_set) == 1.0);

        // Independent route: recompute the coverage ratio by hand.
        std::string visible;
        for (const env::Step& s : t.steps)
            visible += s.thought + "\n" + s.observation.flatten() + "\n";
        std::size_t covered = 0;
        for (const std::string& name : instance.entity_set)
            if (text::contains_norm(visible, name)) ++covered;
        CHECK(static_cast<double>(covered) / instance.entity_set.size() ==
              rewards::prm(t, instance.entity_set));
    }

    SUBCASE("context budget truncates long rollouts") {
        std::vector<ActionTemplate> script(8, {Kind::reflect, 0, "", "web_search"});
        limits.max_steps = 8;
        limits.max_context_units = 50;
        env::Trajectory t =
            env::rollout_scripted(script, instance, demo_corpus(), cfg, limits, 3);
        CHECK(t.steps.size() < 8);
        CHECK_FALSE(t.final_answer.has_value());
    }
}

TEST_CASE("trajectory serialization round trip") {
    kg::QueryInstance instance = demo_instance();
    policy::PolicyParams uniform =
        policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));
    env::Trajectory t = env::rollout(uniform, instance, demo_corpus(), {}, {}, 5);
    env::Trajectory back = env::Trajectory::from_json(t.to_json());
    CHECK(back.to_json() == t.to_json());
}

TEST_CASE("search tools route to their corpus partitions") {
    using kg::json;
    std::vector<json> records = {
        json{{"kind", "entity"}, {"id", "i1"}, {"name", "Vault Intern"}, {"partition", "internal"}},
        json{{"kind", "entity"}, {"id", "w1"}, {"name", "Vault Web"}, {"partition", "web"}},
        json{{"kind", "entity"}, {"id", "a1"}, {"name", "Vault Paper"}, {"partition", "academic"}},
        json{{"kind", "document"}, {"entity", "i1"}, {"text", "Vault Intern holds ledgers"}},
        json{{"kind", "document"}, {"entity", "w1"}, {"text", "Vault Web holds ledgers"}},
        json{{"kind", "document"}, {"entity", "a1"}, {"text", "Vault Paper holds ledgers"}},
    };
    kg::KnowledgeGraph g = kg::KnowledgeGraph::from_records(records);
    env::Corpus corpus(g);
    env::ToolSession session(corpus, {}, Rng(1));
    CHECK(session.execute({env::Tool::internal_search, "ledgers", 1}).snippets.front().entity ==
          "i1");
    CHECK(session.execute({env::Tool::web_search, "ledgers", 2}).snippets.front().entity == "w1");
    CHECK(session.execute({env::Tool::academic_search, "ledgers", 3}).snippets.front().entity ==
          "a1");
}
