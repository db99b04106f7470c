#pragma once

#include <map>
#include <optional>
#include <string>

#include "questlab/reportrewards.hpp"
#include "questlab/rewards.hpp"

namespace questlab::remote {

// Chat-completion style endpoint. The API key is read from the named
// environment variable, never stored in files.
struct ChatEndpoint {
    std::string base_url;  // e.g. "http://127.0.0.1:8090"
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string api_key_env = "QUESTLAB_API_KEY";
    int max_retries = 2;
    int timeout_seconds = 10;

    static ChatEndpoint from_env();  // QUESTLAB_ENDPOINT / QUESTLAB_MODEL
};

// Minimal chat client with bounded retry. All remote judge/agent traffic goes
// through here. Raises Error("judge-unavailable") once retries are exhausted.
class RemoteChatClient {
public:
    explicit RemoteChatClient(ChatEndpoint endpoint);
    std::string complete(const std::string& system, const std::string& user) const;

private:
    ChatEndpoint endpoint_;
};

// Substitutes {name} placeholders in a prompt template.
std::string render_prompt(std::string template_text,
                          const std::map<std::string, std::string>& vars);

// Three-vote outcome judge backed by the chat endpoint; each vote asks for a
// binary yes/no verdict with a short rationale.
class RemoteJudge final : public rewards::JudgeBackend {
public:
    explicit RemoteJudge(ChatEndpoint endpoint);
    std::array<rewards::JudgeVote, 3> judge(const env::Trajectory& trajectory,
                                            const kg::QueryInstance& instance) override;

private:
    RemoteChatClient client_;
};

// Attribution verifier consuming the shipped verification prompt template;
// expects a {"result": "yes"|"no", ...} reply. Unavailable backends yield
// nullopt so findings stay unresolved instead of wrong.
class RemoteAttribution final : public report::AttributionBackend {
public:
    RemoteAttribution(ChatEndpoint endpoint, std::string prompt_template);
    std::optional<bool> attribution_present(const std::string& context,
                                            const std::string& matched_sentence) override;

private:
    RemoteChatClient client_;
    std::string template_;
};

}  // namespace questlab::remote
