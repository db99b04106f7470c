#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "questlab/kgforge.hpp"
#include "questlab/policyopt.hpp"
#include "questlab/reportrewards.hpp"
#include "questlab/searchenv.hpp"

namespace questlab::remote {
class RemoteChatClient;
struct ChatEndpoint;
}  // namespace questlab::remote

namespace questlab::orch {

using json = nlohmann::json;

struct Subtask {
    std::string id;           // "s01", "s02", ... (result ordering key)
    std::string instruction;
    std::optional<kg::QueryInstance> target;  // set when the goal is a known instance
};

struct Plan {
    std::string query;
    std::vector<Subtask> subtasks;

    json to_json() const;
    static Plan from_json(const json& j);
};

struct XoTEntry {
    std::string agent;  // subtask id or "planner" / "reporter"
    int step = 0;
    std::string thought;
};

struct ToolMemoryEntry {
    std::string id;  // "tm-<subtask>-<step>"
    std::string agent;
    env::ToolCall call;
    std::string digest;       // observation text truncated to 1000 chars
    std::string digest_hash;  // content fingerprint of the full observation
};

// Append-only run memory shared by the agents. Appends are thread-safe; the
// canonical (subtask id, step) order is established once the run settles.
class RunMemory {
public:
    RunMemory();
    RunMemory(RunMemory&&) = default;
    RunMemory& operator=(RunMemory&&) = default;
    RunMemory(const RunMemory&) = delete;
    RunMemory& operator=(const RunMemory&) = delete;

    void append_reasoning(XoTEntry entry);
    void append_tool(const std::string& agent, int step, const env::ToolCall& call,
                     const env::Observation& observation);
    void settle();  // sort into canonical order

    const std::vector<XoTEntry>& reasoning() const { return reasoning_; }
    const std::vector<ToolMemoryEntry>& tool_entries() const { return tool_; }
    const ToolMemoryEntry* find(const std::string& id) const;

    json to_json() const;
    static RunMemory from_json(const json& j);

private:
    std::unique_ptr<std::mutex> mutex_;
    std::vector<XoTEntry> reasoning_;
    std::vector<ToolMemoryEntry> tool_;
};

struct SubReport {
    std::string subtask_id;
    std::string findings;
    std::vector<std::string> citations;  // tool memory ids
    bool complete = false;

    json to_json() const;
    static SubReport from_json(const json& j);
};

struct BackendConfig {
    enum class Kind { scripted, surrogate, remote_chat };

    Kind kind = Kind::scripted;
    const policy::PolicyParams* params = nullptr;      // surrogate
    const remote::ChatEndpoint* endpoint = nullptr;    // remote_chat

    static BackendConfig scripted() { return {}; }
};

BackendConfig::Kind backend_kind_from_string(const std::string& s);
std::string to_string(BackendConfig::Kind k);

// Splits the query into subtasks, one per top-level constraint group
// (separated by ";" or "and also"). Deterministic for scripted and surrogate
// backends; raises on an empty query.
Plan plan(const std::string& query, const BackendConfig& backend);

// Executes subtasks on independent agent instances (up to `parallelism`
// threads), appending to the shared memory. Results are ordered by subtask id
// regardless of completion order; a failing subtask yields an incomplete
// SubReport without aborting the rest.
std::vector<std::pair<SubReport, env::Trajectory>> run_subtasks(
    const Plan& plan, const env::Corpus& corpus, const BackendConfig& backend, int parallelism,
    std::uint64_t seed, RunMemory& memory, const env::ToolLayerConfig& tools,
    const env::RolloutLimits& limits);

struct FinalReport {
    std::vector<std::pair<int, std::string>> outline;  // (level, heading)
    std::string body;                                  // markdown

    json to_json() const;
    static FinalReport from_json(const json& j);
};

// Outline first, then body; every citation resolves into tool memory.
FinalReport synthesize_report(const std::vector<SubReport>& subreports, const RunMemory& memory,
                              const BackendConfig& backend,
                              const report::RubricSet* rubric_hints);

struct ResearchRun {
    std::string query;
    std::string backend;
    int parallelism = 1;
    std::uint64_t seed = 0;
    Plan plan;
    std::vector<SubReport> subreports;
    std::vector<env::Trajectory> trajectories;  // parallel to subreports
    RunMemory memory;
    FinalReport report;
    std::vector<std::string> load_warnings;  // unknown-field notes from load_trace
};

// Whole pipeline: plan -> parallel deep-search -> report synthesis.
ResearchRun research(const std::string& query, const env::Corpus& corpus,
                     const BackendConfig& backend, int parallelism, std::uint64_t seed,
                     const env::ToolLayerConfig& tools, const env::RolloutLimits& limits);

// JSON Lines trace: meta record, plan, subreports, trajectories, memory dump,
// final report. load(persist(run)) reproduces the run's data; unknown optional
// fields are ignored with a warning, truncation and version skew raise.
void persist_trace(const ResearchRun& run, const std::string& path);
ResearchRun load_trace(const std::string& path);

}  // namespace questlab::orch
