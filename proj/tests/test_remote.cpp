#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/orchestrator.hpp"
#include "questlab/remote.hpp"

using namespace questlab;
using json = nlohmann::json;

namespace {

// Local chat-completion stand-in. `reply` maps the user message to content;
// `fail_first` makes the first N requests return 500 to exercise retries.
class MockChatServer {
public:
    explicit MockChatServer(std::function<std::string(const std::string&)> reply,
                            int fail_first = 0)
        : reply_(std::move(reply)), fail_remaining_(fail_first) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            ++requests_;
            if (fail_remaining_ > 0) {
                --fail_remaining_;
                res.status = 500;
                res.set_content("overloaded", "text/plain");
                return;
            }
            json body = json::parse(req.body);
            const std::string user = body.at("messages").at(1).at("content").get<std::string>();
            json out = {{"choices", json::array({json{
                            {"message", json{{"role", "assistant"},
                                             {"content", reply_(user)}}}}})}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockChatServer() {
        server_.stop();
        thread_.join();
    }

    remote::ChatEndpoint endpoint(int max_retries = 2) const {
        remote::ChatEndpoint e;
        e.base_url = "http://127.0.0.1:" + std::to_string(port_);
        e.max_retries = max_retries;
        e.timeout_seconds = 5;
        return e;
    }

    int requests() const { return requests_; }

private:
    httplib::Server server_;
    std::function<std::string(const std::string&)> reply_;
    std::atomic<int> fail_remaining_;
    std::atomic<int> requests_{0};
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("remote chat client round trip and retry") {
    SUBCASE("successful completion") {
        MockChatServer server([](const std::string& user) { return "echo: " + user; });
        remote::RemoteChatClient client(server.endpoint());
        CHECK(client.complete("sys", "ping") == "echo: ping");
    }

    SUBCASE("transient 500s are retried") {
        MockChatServer server([](const std::string&) { return "recovered"; }, 2);
        remote::RemoteChatClient client(server.endpoint(2));
        CHECK(client.complete("sys", "ping") == "recovered");
        CHECK(server.requests() == 3);
    }

    SUBCASE("persistent failures raise judge-unavailable") {
        MockChatServer server([](const std::string&) { return "never"; }, 100);
        remote::RemoteChatClient client(server.endpoint(1));
        try {
            client.complete("sys", "ping");
            FAIL("expected judge-unavailable");
        } catch (const Error& e) {
            CHECK(e.code() == "judge-unavailable");
        }
    }

    SUBCASE("unreachable endpoints raise judge-unavailable") {
        remote::ChatEndpoint dead;
        dead.base_url = "http://127.0.0.1:1";
        dead.max_retries = 0;
        dead.timeout_seconds = 1;
        remote::RemoteChatClient client(dead);
        CHECK_THROWS_AS(client.complete("sys", "ping"), Error);
    }
}

TEST_CASE("remote judge produces three majority votes") {
    MockChatServer server([](const std::string& user) {
        // Vote yes only when the candidate answer matches the reference.
        const bool match = user.find("Reference answer: Quarry Lodge") != std::string::npos &&
                           user.find("Candidate answer: Quarry Lodge") != std::string::npos;
        return json{{"result", match ? "yes" : "no"}, {"detail", "checked"}}.dump();
    });
    remote::RemoteJudge judge(server.endpoint());

    kg::QueryInstance instance;
    instance.answer = "Quarry Lodge";
    env::Trajectory t;
    env::Step s;
    s.action = {env::Tool::answer, "Quarry Lodge", 1};
    s.observation.text = "answer recorded";
    s.tool_success = 1;
    t.steps.push_back(s);
    t.final_answer = "Quarry Lodge";

    rewards::JudgeVerdict v = rewards::orm(t, instance, judge);
    CHECK(v.decision == 1);
    for (const rewards::JudgeVote& vote : v.votes) CHECK(vote.vote == 1);

    t.final_answer = "Harbor Lodge";
    CHECK(rewards::orm(t, instance, judge).decision == 0);
}

TEST_CASE("remote attribution consumes the verification prompt") {
    MockChatServer server([](const std::string& user) {
        const bool yes = user.find("According to") != std::string::npos;
        return json{{"result", yes ? "yes" : "no"}, {"detail", "scan"}}.dump();
    });
    remote::RemoteAttribution backend(server.endpoint(), fixtures::verification_prompt_text());

    std::optional<bool> with = backend.attribution_present(
        "According to the Meridian Institute, capacity will double by 2024.", "capacity");
    REQUIRE(with.has_value());
    CHECK(*with);

    std::optional<bool> without =
        backend.attribution_present("The market will double by 2024.", "market");
    REQUIRE(without.has_value());
    CHECK_FALSE(*without);

    SUBCASE("unavailable endpoints leave the finding unresolved") {
        remote::ChatEndpoint dead;
        dead.base_url = "http://127.0.0.1:1";
        dead.max_retries = 0;
        dead.timeout_seconds = 1;
        remote::RemoteAttribution off(dead, fixtures::verification_prompt_text());
        CHECK_FALSE(off.attribution_present("text", "text").has_value());
    }
}

TEST_CASE("remote chat backend drives planning and synthesis") {
    MockChatServer server([](const std::string& user) {
        if (user.find("sub-reports") != std::string::npos)
            return std::string("# Remote Report\n\nSynthesized remotely.\n\n<final_answer>done"
                               "</final_answer>\n");
        return std::string("first angle\nsecond angle\n");
    });
    remote::ChatEndpoint endpoint = server.endpoint();

    orch::BackendConfig backend;
    backend.kind = orch::BackendConfig::Kind::remote_chat;
    backend.endpoint = &endpoint;

    kg::KnowledgeGraph graph = fixtures::demo_graph();
    env::Corpus corpus(graph);
    orch::ResearchRun run = orch::research("broad question", corpus, backend, 1, 4, {}, {});
    CHECK(run.plan.subtasks.size() == 2);  // one per line from the remote planner
    CHECK(run.report.body.find("Remote Report") != std::string::npos);
    REQUIRE(!run.report.outline.empty());
    CHECK(run.report.outline[0].second == "Remote Report");
}

TEST_CASE("rubric scoring prompt template renders") {
    std::string rendered = remote::render_prompt(
        fixtures::scoring_prompt_text(),
        {{"task_prompt", "T"}, {"article_1", "A"}, {"article_2", "B"}, {"criteria_list", "C"}});
    CHECK(rendered.find("<task>T</task>") != std::string::npos);
    CHECK(rendered.find("<article_1>A</article_1>") != std::string::npos);
    CHECK(rendered.find("{task_prompt}") == std::string::npos);
}
