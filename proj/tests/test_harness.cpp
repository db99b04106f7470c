#include <doctest.h>

#include <filesystem>

#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/harness.hpp"
#include "questlab/jsonl.hpp"

using namespace questlab;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    std::string dir = (fs::temp_directory_path() / ("questlab_harness_" + name)).string();
    fs::remove_all(dir);
    return dir;
}

env::Trajectory search_trajectory(const std::vector<std::string>& args) {
    env::Trajectory t;
    t.query_id = "fixture";
    for (std::size_t i = 0; i < args.size(); ++i) {
        env::Step s;
        s.thought = "searching";
        s.action = {env::Tool::web_search, args[i], static_cast<int>(i + 1)};
        s.observation.text = "results";
        s.format_valid = true;
        s.tool_success = 1;
        t.steps.push_back(std::move(s));
    }
    return t;
}

const char* kConfigText = R"(
# demo pipeline config
[paths]
graph = "GRAPH"

[run]
stages = ["synth"]

[synth]
hops = 2
count = 6
holdout = 2
seed = 13

[train]
steps = 4
group_size = 2
batch_instances = 2

[eval]
now = "2026-06-30"
)";

std::string config_with_graph(const std::string& graph_path) {
    std::string text = kConfigText;
    auto pos = text.find("GRAPH");
    text.replace(pos, 5, graph_path);
    return text;
}

std::string demo_graph_file() {
    static std::string path;
    if (path.empty()) {
        path = (fs::temp_directory_path() / "questlab_demo_graph.jsonl").string();
        jsonl::write_file(path, fixtures::demo_graph_records());
    }
    return path;
}

}  // namespace

TEST_CASE("config document parsing") {
    harness::ConfigDoc doc = harness::ConfigDoc::parse(R"(
# comment
[alpha]
name = "value" # trailing comment
count = 12
rate = 0.25
flag = true
items = ["a", "b", "c"]
)");
    CHECK(doc.get_string("alpha", "name", "") == "value");
    CHECK(doc.get_number("alpha", "count", 0) == 12);
    CHECK(doc.get_number("alpha", "rate", 0) == 0.25);
    CHECK(doc.get_bool("alpha", "flag", false));
    CHECK(doc.get_list("alpha", "items", {}) == std::vector<std::string>{"a", "b", "c"});
    CHECK(doc.get_string("alpha", "missing", "fallback") == "fallback");

    SUBCASE("malformed lines are rejected") {
        CHECK_THROWS_AS(harness::ConfigDoc::parse("[sec]\nnot a pair"), Error);
        CHECK_THROWS_AS(harness::ConfigDoc::parse("key = 1"), Error);  // outside a section
        CHECK_THROWS_AS(harness::ConfigDoc::parse("[sec]\nkey = \"open"), Error);
        CHECK_THROWS_AS(harness::ConfigDoc::parse("[sec]\nkey = 1x"), Error);
    }

    SUBCASE("type mismatches are schema errors") {
        harness::ConfigDoc d = harness::ConfigDoc::parse("[a]\nk = 5");
        CHECK_THROWS_WITH_AS(d.get_string("a", "k", ""), doctest::Contains("config-invalid"),
                             Error);
    }
}

TEST_CASE("run config schema checking") {
    SUBCASE("valid config loads with defaults filled") {
        harness::RunConfig c = harness::RunConfig::from_doc(
            harness::ConfigDoc::parse(config_with_graph(demo_graph_file())));
        CHECK(c.synth_count == 6);
        CHECK(c.synth_holdout == 2);
        CHECK(c.train.steps == 4);
        CHECK(c.train.learning_rate == 2.0);  // default carried through
        CHECK_NOTHROW(c.validate());
    }

    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_WITH_AS(harness::RunConfig::from_doc(harness::ConfigDoc::parse(
                                 "[synth]\nhopz = 3")),
                             doctest::Contains("unknown key"), Error);
        CHECK_THROWS_WITH_AS(
            harness::RunConfig::from_doc(harness::ConfigDoc::parse("[mystery]\nx = 1")),
            doctest::Contains("unknown section"), Error);
    }

    SUBCASE("precondition violations are caught before running") {
        std::string bad = config_with_graph(demo_graph_file());
        bad += "\n[tools]\nfailure_injection_rate = 1.5\n";
        CHECK_THROWS_AS(harness::RunConfig::from_doc(harness::ConfigDoc::parse(bad)), Error);

        std::string bad2 = config_with_graph(demo_graph_file());
        bad2 += "\n[run]\nstages = [\"teleport\"]\n";
        CHECK_THROWS_AS(harness::RunConfig::from_doc(harness::ConfigDoc::parse(bad2)), Error);
    }
}

TEST_CASE("module_eval hand-computed fixtures") {
    report::Date now = report::Date::parse("2026-06-30");

    SUBCASE("query repetition rate 1/3 on [q1,q1,q2]") {
        harness::MetricsReport m =
            harness::module_eval({search_trajectory({"q1", "q1", "q2"})}, {}, now);
        CHECK(m.query_repetition_rate == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(m.tool_failure_rate == 0.0);
        CHECK(m.tool_usage.at("web_search") == doctest::Approx(1.0));
    }

    SUBCASE("reflection count and failure rate") {
        env::Trajectory t = search_trajectory({"q1"});
        env::Step reflect;
        reflect.thought = "pause";
        reflect.action = {env::Tool::reflect, "", 2};
        reflect.observation.text = "noted";
        reflect.format_valid = true;
        reflect.tool_success = 1;
        t.steps.push_back(reflect);
        env::Step failed;
        failed.thought = "crawl";
        failed.action = {env::Tool::crawl, "ghost", 3};
        failed.observation = env::Observation::error_of("unknown-entity: ghost");
        failed.format_valid = true;
        failed.tool_success = 0;
        t.steps.push_back(failed);

        harness::MetricsReport m = harness::module_eval({t}, {}, now);
        CHECK(m.reflection_turns_mean == doctest::Approx(1.0));
        CHECK(m.tool_failure_rate == doctest::Approx(0.5));  // 1 of 2 retrieval calls
        double usum = 0;
        for (auto& [tool, share] : m.tool_usage) usum += share;
        CHECK(usum == doctest::Approx(1.0));
    }

    SUBCASE("outline titles all present miss nothing") {
        harness::ReportInput input;
        input.outline = {{1, "Overview"}, {2, "2. Findings"}, {2, "Closing Notes"}};
        input.body = "# Overview\n\n## Findings\n\ntext\n\n## closing   notes\n";
        harness::MetricsReport m = harness::module_eval({}, {input}, now);
        CHECK(m.outline_title_miss_rate == 0.0);
        CHECK(m.hierarchy_error_count == 0);
    }

    SUBCASE("missing outline titles and hierarchy jumps are counted") {
        harness::ReportInput input;
        input.outline = {{1, "Overview"}, {2, "Absent Section"}};
        input.body = "# Overview\n\n### Deep Dive\n";  // H1 -> H3 jump
        harness::MetricsReport m = harness::module_eval({}, {input}, now);
        CHECK(m.outline_title_miss_rate == doctest::Approx(0.5));
        CHECK(m.hierarchy_error_count == 1);
    }

    SUBCASE("a 3-column table with a 2-column row counts as invalid") {
        harness::ReportInput input;
        input.body = "| a | b | c |\n|---|---|---|\n| 1 | 2 |\n";
        harness::MetricsReport m = harness::module_eval({}, {input}, now);
        CHECK(m.valid_table_rate == 0.0);
    }

    SUBCASE("tense errors mark the report") {
        harness::ReportInput bad;
        bad.body = "By 2025, the market will reach tens of billions.\n";
        harness::ReportInput good;
        good.body = "The market reached ten billion in 2024.\n";
        harness::MetricsReport m = harness::module_eval({}, {bad, good}, now);
        CHECK(m.tense_error_rate == doctest::Approx(0.5));
    }

    SUBCASE("empty inputs are rejected") {
        CHECK_THROWS_WITH_AS(harness::module_eval({}, {}, now), doctest::Contains("empty-input"),
                             Error);
    }
}

TEST_CASE("run_pipeline stage selection and determinism") {
    const std::string dir = temp_dir("synth_only");
    harness::RunConfig config = harness::RunConfig::from_doc(
        harness::ConfigDoc::parse(config_with_graph(demo_graph_file())));

    SUBCASE("synth-only emits exactly the instance artifacts") {
        harness::run_pipeline(config, dir);
        CHECK(fs::exists(dir + "/instances.jsonl"));
        CHECK(fs::exists(dir + "/holdout.jsonl"));
        CHECK(fs::exists(dir + "/summary.json"));
        CHECK_FALSE(fs::exists(dir + "/traces.jsonl"));
        CHECK_FALSE(fs::exists(dir + "/policy.json"));
        CHECK(jsonl::read_file(dir + "/instances.jsonl").size() == 6);
        CHECK(jsonl::read_file(dir + "/holdout.jsonl").size() == 2);
    }

    SUBCASE("identical configs produce identical artifact hashes") {
        const std::string dir_a = temp_dir("det_a");
        const std::string dir_b = temp_dir("det_b");
        harness::run_pipeline(config, dir_a);
        harness::run_pipeline(config, dir_b);
        CHECK(jsonl::read_text_file(dir_a + "/summary.json") ==
              jsonl::read_text_file(dir_b + "/summary.json"));
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
    }

    SUBCASE("a failing stage writes a machine-readable error record") {
        harness::RunConfig broken = config;
        broken.stages = {"research"};
        broken.research_query = "q";
        broken.research_backend = "remote_chat";  // no endpoint configured
        const std::string dir_err = temp_dir("err");
        CHECK_THROWS_AS(harness::run_pipeline(broken, dir_err), Error);
        REQUIRE(fs::exists(dir_err + "/error.json"));
        nlohmann::json record = nlohmann::json::parse(jsonl::read_text_file(dir_err + "/error.json"));
        CHECK(record.at("stage") == "research");
        CHECK(!record.at("code").get<std::string>().empty());
        fs::remove_all(dir_err);
    }

    fs::remove_all(dir);
}

TEST_CASE("run_pipeline rollout and eval stages") {
    const std::string dir = temp_dir("ro_eval");
    std::string text = config_with_graph(demo_graph_file());
    auto pos = text.find("stages = [\"synth\"]");
    text.replace(pos, std::string("stages = [\"synth\"]").size(),
                 "stages = [\"synth\", \"rollout\", \"research\", \"eval\"]");
    text += "\n[research]\nquery = \"relay network licensing; tier survey\"\n";
    harness::RunConfig config = harness::RunConfig::from_doc(harness::ConfigDoc::parse(text));
    harness::run_pipeline(config, dir);
    CHECK(fs::exists(dir + "/traces.jsonl"));
    CHECK(fs::exists(dir + "/report.md"));
    CHECK(fs::exists(dir + "/metrics.json"));
    nlohmann::json metrics = nlohmann::json::parse(jsonl::read_text_file(dir + "/metrics.json"));
    CHECK(metrics.contains("reasoning"));
    CHECK(metrics.at("report").at("valid_table_rate").get<double>() >= 0.0);
    fs::remove_all(dir);
}

TEST_CASE("full pipeline determinism across reruns") {
    std::string text = config_with_graph(demo_graph_file());
    auto pos = text.find("stages = [\"synth\"]");
    text.replace(pos, std::string("stages = [\"synth\"]").size(),
                 "stages = [\"synth\", \"rollout\", \"train\", \"align\", \"research\", \"eval\"]");
    text.replace(text.find("steps = 4"), std::string("steps = 4").size(), "steps = 10");
    text += "\n[research]\nquery = \"relay network licensing; tier survey\"\n";
    text += "\n[align]\ninputs = 2\nk = 2\ndpo_steps = 3\nself_sft_steps = 2\n";
    harness::RunConfig config = harness::RunConfig::from_doc(harness::ConfigDoc::parse(text));

    const std::string dir_a = temp_dir("full_a");
    const std::string dir_b = temp_dir("full_b");
    harness::run_pipeline(config, dir_a);
    harness::run_pipeline(config, dir_b);
    CHECK(jsonl::read_text_file(dir_a + "/summary.json") ==
          jsonl::read_text_file(dir_b + "/summary.json"));
    // Spot-check a couple of artifact bodies byte-for-byte too.
    CHECK(jsonl::read_text_file(dir_a + "/policy_aligned.json") ==
          jsonl::read_text_file(dir_b + "/policy_aligned.json"));
    CHECK(jsonl::read_text_file(dir_a + "/report.md") ==
          jsonl::read_text_file(dir_b + "/report.md"));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}
