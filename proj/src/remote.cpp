#include "questlab/remote.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "questlab/errors.hpp"
#include "questlab/text.hpp"

namespace questlab::remote {

using json = nlohmann::json;

ChatEndpoint ChatEndpoint::from_env() {
    ChatEndpoint e;
    if (const char* url = std::getenv("QUESTLAB_ENDPOINT")) e.base_url = url;
    if (const char* model = std::getenv("QUESTLAB_MODEL")) e.model = model;
    return e;
}

RemoteChatClient::RemoteChatClient(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    require(!endpoint_.base_url.empty(), "config-invalid",
            "remote endpoint has no base URL (set QUESTLAB_ENDPOINT)");
}

std::string RemoteChatClient::complete(const std::string& system, const std::string& user) const {
    json body = {{"model", endpoint_.model},
                 {"messages", json::array({json{{"role", "system"}, {"content", system}},
                                           json{{"role", "user"}, {"content", user}}})}};

    httplib::Client client(endpoint_.base_url);
    client.set_connection_timeout(endpoint_.timeout_seconds, 0);
    client.set_read_timeout(endpoint_.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string failure = "no attempt made";
    for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
        httplib::Result res =
            client.Post(endpoint_.path, headers, body.dump(), "application/json");
        if (!res) {
            failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            failure = "server status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            raise("judge-unavailable",
                  "endpoint rejected the request with status " + std::to_string(res->status));
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded())
            raise("judge-unavailable", "endpoint returned unparseable JSON");
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            raise("judge-unavailable", "endpoint reply lacks choices[0].message.content");
        }
    }
    raise("judge-unavailable", "retries exhausted: " + failure);
}

std::string render_prompt(std::string template_text,
                          const std::map<std::string, std::string>& vars) {
    for (const auto& [name, value] : vars) {
        const std::string tag = "{" + name + "}";
        std::size_t pos = 0;
        while ((pos = template_text.find(tag, pos)) != std::string::npos) {
            template_text.replace(pos, tag.size(), value);
            pos += value.size();
        }
    }
    return template_text;
}

namespace {

int parse_binary_verdict(const std::string& content) {
    json j = json::parse(content, nullptr, false);
    if (j.is_object() && j.contains("result")) {
        const std::string r = text::normalize(j.at("result").dump());
        if (r.find("yes") != std::string::npos || r.find('1') != std::string::npos) return 1;
        return 0;
    }
    const std::string norm = text::normalize(content);
    if (norm.find("yes") != std::string::npos) return 1;
    if (norm.find("no") != std::string::npos) return 0;
    return norm.find('1') != std::string::npos ? 1 : 0;
}

}  // namespace

RemoteJudge::RemoteJudge(ChatEndpoint endpoint) : client_(std::move(endpoint)) {}

std::array<rewards::JudgeVote, 3> RemoteJudge::judge(const env::Trajectory& trajectory,
                                                     const kg::QueryInstance& instance) {
    const std::string answer = trajectory.final_answer.value_or("");
    std::array<rewards::JudgeVote, 3> votes;
    for (int v = 0; v < 3; ++v) {
        const std::string user =
            "Question: " + instance.query_text + "\nReference answer: " + instance.answer +
            "\nCandidate answer: " + answer +
            "\nIs the candidate answer correct? Reply with JSON {\"result\": \"yes\" or "
            "\"no\", \"detail\": \"...\"}. You are judge #" +
            std::to_string(v + 1) + ".";
        const std::string content = client_.complete(
            "You are a strict answer-verification judge. Output only the specified JSON.", user);
        votes[static_cast<std::size_t>(v)] = {parse_binary_verdict(content), content};
    }
    return votes;
}

RemoteAttribution::RemoteAttribution(ChatEndpoint endpoint, std::string prompt_template)
    : client_(std::move(endpoint)), template_(std::move(prompt_template)) {}

std::optional<bool> RemoteAttribution::attribution_present(const std::string& context,
                                                           const std::string& matched_sentence) {
    const std::string user =
        render_prompt(template_, {{"context", context}, {"matched_text", matched_sentence}});
    try {
        const std::string content = client_.complete(
            "You are a rigorous fact-checking assistant. Output only the specified JSON.", user);
        return parse_binary_verdict(content) == 1;
    } catch (const Error& e) {
        if (e.code() == "judge-unavailable") return std::nullopt;
        throw;
    }
}

}  // namespace questlab::remote
