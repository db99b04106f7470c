#include "questlab/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <set>
#include <thread>

#include "questlab/errors.hpp"
#include "questlab/jsonl.hpp"
#include "questlab/remote.hpp"
#include "questlab/text.hpp"

namespace questlab::orch {

// ---------------------------------------------------------------------------
// Plan

json Plan::to_json() const {
    json subs = json::array();
    for (const Subtask& s : subtasks) {
        json sj = {{"id", s.id}, {"instruction", s.instruction}};
        if (s.target) sj["target"] = s.target->to_json();
        subs.push_back(sj);
    }
    return {{"query", query}, {"subtasks", subs}};
}

Plan Plan::from_json(const json& j) {
    Plan p;
    p.query = j.at("query").get<std::string>();
    for (const auto& sj : j.at("subtasks")) {
        Subtask s;
        s.id = sj.at("id").get<std::string>();
        s.instruction = sj.at("instruction").get<std::string>();
        if (sj.contains("target")) s.target = kg::QueryInstance::from_json(sj.at("target"));
        p.subtasks.push_back(std::move(s));
    }
    return p;
}

BackendConfig::Kind backend_kind_from_string(const std::string& s) {
    if (s == "scripted") return BackendConfig::Kind::scripted;
    if (s == "surrogate") return BackendConfig::Kind::surrogate;
    if (s == "remote_chat" || s == "remote") return BackendConfig::Kind::remote_chat;
    raise("config-invalid", "unknown backend '" + s + "'");
}

std::string to_string(BackendConfig::Kind k) {
    switch (k) {
        case BackendConfig::Kind::scripted: return "scripted";
        case BackendConfig::Kind::surrogate: return "surrogate";
        case BackendConfig::Kind::remote_chat: return "remote_chat";
    }
    return "scripted";
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\n");
    return s.substr(b, e - b + 1);
}

// Top-level constraint groups: ";" or the connective "and also".
std::vector<std::string> split_constraint_groups(const std::string& query) {
    std::vector<std::string> parts;
    std::string rest = query;
    for (;;) {
        std::size_t semi = rest.find(';');
        std::size_t also = rest.find("and also");
        std::size_t cut = std::min(semi, also);
        if (cut == std::string::npos) break;
        const std::size_t skip = (cut == semi) ? 1 : 8;
        parts.push_back(trim(rest.substr(0, cut)));
        rest = rest.substr(cut + skip);
    }
    parts.push_back(trim(rest));
    parts.erase(std::remove_if(parts.begin(), parts.end(),
                               [](const std::string& p) { return p.empty(); }),
                parts.end());
    return parts;
}

std::string subtask_id(std::size_t index) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "s%02zu", index + 1);
    return buf;
}

}  // namespace

Plan plan(const std::string& query, const BackendConfig& backend) {
    require(!trim(query).empty(), "invalid-argument", "empty query");
    Plan p;
    p.query = query;

    if (backend.kind == BackendConfig::Kind::remote_chat) {
        require(backend.endpoint != nullptr, "config-invalid",
                "remote_chat backend needs an endpoint");
        remote::RemoteChatClient client(*backend.endpoint);
        const std::string reply = client.complete(
            "You decompose research queries. Reply with one subtask per line, nothing else.",
            query);
        std::istringstream in(reply);
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (!line.empty()) p.subtasks.push_back({subtask_id(p.subtasks.size()), line, {}});
        }
        require(!p.subtasks.empty(), "backend-failure", "remote planner returned no subtasks");
        return p;
    }

    for (const std::string& group : split_constraint_groups(query))
        p.subtasks.push_back({subtask_id(p.subtasks.size()), group, {}});
    require(!p.subtasks.empty(), "invalid-argument", "query yields no subtasks");
    return p;
}

// ---------------------------------------------------------------------------
// Memory

RunMemory::RunMemory() : mutex_(std::make_unique<std::mutex>()) {}

void RunMemory::append_reasoning(XoTEntry entry) {
    std::lock_guard<std::mutex> lock(*mutex_);
    reasoning_.push_back(std::move(entry));
}

void RunMemory::append_tool(const std::string& agent, int step, const env::ToolCall& call,
                            const env::Observation& observation) {
    const std::string flat = observation.flatten();
    ToolMemoryEntry entry;
    entry.id = "tm-" + agent + "-" + std::to_string(step);
    entry.agent = agent;
    entry.call = call;
    entry.digest = flat.size() > 1000 ? flat.substr(0, 1000) : flat;
    entry.digest_hash = text::fnv1a_hex(flat);
    std::lock_guard<std::mutex> lock(*mutex_);
    tool_.push_back(std::move(entry));
}

void RunMemory::settle() {
    std::lock_guard<std::mutex> lock(*mutex_);
    std::stable_sort(reasoning_.begin(), reasoning_.end(),
                     [](const XoTEntry& a, const XoTEntry& b) {
                         return std::tie(a.agent, a.step) < std::tie(b.agent, b.step);
                     });
    std::stable_sort(tool_.begin(), tool_.end(),
                     [](const ToolMemoryEntry& a, const ToolMemoryEntry& b) {
                         return std::tie(a.agent, a.id) < std::tie(b.agent, b.id);
                     });
}

const ToolMemoryEntry* RunMemory::find(const std::string& id) const {
    for (const ToolMemoryEntry& e : tool_)
        if (e.id == id) return &e;
    return nullptr;
}

json RunMemory::to_json() const {
    json xot = json::array();
    for (const XoTEntry& e : reasoning_)
        xot.push_back({{"agent", e.agent}, {"step", e.step}, {"thought", e.thought}});
    json tool = json::array();
    for (const ToolMemoryEntry& e : tool_)
        tool.push_back({{"id", e.id},
                        {"agent", e.agent},
                        {"call", e.call.to_json()},
                        {"digest", e.digest},
                        {"digest_hash", e.digest_hash}});
    return {{"xot", xot}, {"tool", tool}};
}

RunMemory RunMemory::from_json(const json& j) {
    RunMemory m;
    for (const auto& e : j.at("xot"))
        m.reasoning_.push_back({e.at("agent").get<std::string>(), e.at("step").get<int>(),
                                e.at("thought").get<std::string>()});
    for (const auto& e : j.at("tool")) {
        ToolMemoryEntry t;
        t.id = e.at("id").get<std::string>();
        t.agent = e.at("agent").get<std::string>();
        t.call = env::ToolCall::from_json(e.at("call"));
        t.digest = e.at("digest").get<std::string>();
        t.digest_hash = e.at("digest_hash").get<std::string>();
        m.tool_.push_back(std::move(t));
    }
    return m;
}

json SubReport::to_json() const {
    return {{"subtask_id", subtask_id},
            {"findings", findings},
            {"citations", citations},
            {"complete", complete}};
}

SubReport SubReport::from_json(const json& j) {
    SubReport s;
    s.subtask_id = j.at("subtask_id").get<std::string>();
    s.findings = j.at("findings").get<std::string>();
    s.citations = j.at("citations").get<std::vector<std::string>>();
    s.complete = j.at("complete").get<bool>();
    return s;
}

// ---------------------------------------------------------------------------
// Subtask execution

namespace {

kg::QueryInstance pseudo_instance(const Subtask& subtask) {
    if (subtask.target) return *subtask.target;
    kg::QueryInstance q;
    q.id = subtask.id;
    q.query_text = subtask.instruction;
    q.hops = 1;
    q.difficulty = kg::Difficulty::easy;
    return q;
}

SubReport make_subreport(const Subtask& subtask, const env::Trajectory& trajectory,
                         const std::vector<std::string>& citations) {
    SubReport sr;
    sr.subtask_id = subtask.id;
    sr.complete = trajectory.final_answer.has_value();
    sr.citations = citations;
    std::string outcome = sr.complete ? *trajectory.final_answer : "incomplete";
    sr.findings = "Investigated: " + subtask.instruction + ". Outcome: " + outcome + ".";
    return sr;
}

}  // namespace

std::vector<std::pair<SubReport, env::Trajectory>> run_subtasks(
    const Plan& run_plan, const env::Corpus& corpus, const BackendConfig& backend,
    int parallelism, std::uint64_t seed, RunMemory& memory, const env::ToolLayerConfig& tools,
    const env::RolloutLimits& limits) {
    require(parallelism >= 1, "invalid-argument", "parallelism must be >= 1");
    require(backend.kind != BackendConfig::Kind::surrogate || backend.params != nullptr,
            "config-invalid", "surrogate backend needs policy params");

    const std::size_t n = run_plan.subtasks.size();
    std::vector<std::pair<SubReport, env::Trajectory>> results(n);

    auto execute_one = [&](std::size_t idx) {
        const Subtask& subtask = run_plan.subtasks[idx];
        const kg::QueryInstance instance = pseudo_instance(subtask);
        const std::uint64_t subtask_seed = Rng::mix(seed, 0x5AB0 + idx);
        env::Trajectory trajectory;
        try {
            if (backend.kind == BackendConfig::Kind::surrogate) {
                trajectory = env::rollout(*backend.params, instance, corpus, tools, limits,
                                          subtask_seed);
            } else {
                // Default deep-search script: retrieve, deepen, answer.
                std::vector<policy::ActionTemplate> script = {
                    {policy::ActionTemplate::Kind::search_literal, 0, subtask.instruction,
                     "web_search"},
                    {policy::ActionTemplate::Kind::crawl_top, 0, "", "web_search"},
                    {policy::ActionTemplate::Kind::answer_top, 0, "", "web_search"},
                };
                trajectory = env::rollout_scripted(script, instance, corpus, tools, limits,
                                                   subtask_seed);
            }
        } catch (const Error& e) {
            SubReport failed;
            failed.subtask_id = subtask.id;
            failed.findings = "Subtask failed: " + std::string(e.what());
            failed.complete = false;
            env::Trajectory empty;
            empty.query_id = subtask.id;
            results[idx] = {std::move(failed), std::move(empty)};
            return;
        }
        trajectory.query_id = subtask.id;

        std::vector<std::string> citations;
        for (std::size_t t = 0; t < trajectory.steps.size(); ++t) {
            const env::Step& step = trajectory.steps[t];
            memory.append_reasoning({subtask.id, static_cast<int>(t + 1), step.thought});
            if (env::is_retrieval(step.action.tool)) {
                memory.append_tool(subtask.id, static_cast<int>(t + 1), step.action,
                                   step.observation);
                citations.push_back("tm-" + subtask.id + "-" + std::to_string(t + 1));
            }
        }
        results[idx] = {make_subreport(subtask, trajectory, citations), std::move(trajectory)};
    };

    if (parallelism == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) execute_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(parallelism), n);
        for (std::size_t w = 0; w < count; ++w) {
            workers.emplace_back([&]() {
                for (;;) {
                    const std::size_t idx = next.fetch_add(1);
                    if (idx >= n) return;
                    execute_one(idx);
                }
            });
        }
        for (std::thread& t : workers) t.join();
    }

    memory.settle();
    // Already ordered: results are indexed by subtask position and subtask ids
    // are assigned in order.
    return results;
}

// ---------------------------------------------------------------------------
// Report synthesis

json FinalReport::to_json() const {
    json outline_j = json::array();
    for (const auto& [level, title] : outline) outline_j.push_back({{"level", level}, {"title", title}});
    return {{"outline", outline_j}, {"body", body}};
}

FinalReport FinalReport::from_json(const json& j) {
    FinalReport r;
    for (const auto& h : j.at("outline"))
        r.outline.emplace_back(h.at("level").get<int>(), h.at("title").get<std::string>());
    r.body = j.at("body").get<std::string>();
    return r;
}

FinalReport synthesize_report(const std::vector<SubReport>& subreports, const RunMemory& memory,
                              const BackendConfig& backend,
                              const report::RubricSet* rubric_hints) {
    require(!subreports.empty(), "invalid-argument", "no subreports to synthesize");

    if (backend.kind == BackendConfig::Kind::remote_chat) {
        require(backend.endpoint != nullptr, "config-invalid",
                "remote_chat backend needs an endpoint");
        remote::RemoteChatClient client(*backend.endpoint);
        json subs = json::array();
        for (const SubReport& s : subreports) subs.push_back(s.to_json());
        std::string user = "Write a markdown research report from these sub-reports. Cite tool "
                           "memory ids with [n] markers and [n]: toolmem:<id> definitions, and "
                           "wrap the final answer in <final_answer> tags.\n" +
                           subs.dump();
        FinalReport r;
        r.body = client.complete("You are a report synthesis agent.", user);
        const report::Report parsed = report::Report::parse(r.body);
        r.outline = parsed.headings;
        return r;
    }

    // Scripted synthesis: outline first, then the body realizing it.
    FinalReport r;
    r.outline.emplace_back(1, "Research Report");
    r.outline.emplace_back(2, "Approach");
    for (const SubReport& s : subreports) r.outline.emplace_back(2, "Findings: " + s.subtask_id);
    r.outline.emplace_back(2, "Summary");

    // Stable citation numbering in order of first use.
    std::vector<std::string> order;
    auto marker_for = [&](const std::string& tm_id) {
        auto it = std::find(order.begin(), order.end(), tm_id);
        if (it == order.end()) {
            order.push_back(tm_id);
            return order.size();
        }
        return static_cast<std::size_t>(it - order.begin()) + 1;
    };

    std::string body = "# Research Report\n\n## Approach\n\n";
    for (std::size_t i = 0; i < subreports.size(); ++i)
        body += std::to_string(i + 1) + ". " + subreports[i].subtask_id + ": " +
                subreports[i].findings + "\n";
    body += "\n";

    for (const SubReport& s : subreports) {
        body += "## Findings: " + s.subtask_id + "\n\n";
        body += s.findings;
        for (const std::string& tm : s.citations)
            body += " [" + std::to_string(marker_for(tm)) + "]";
        body += "\n\n";
    }

    body += "## Summary\n\n| Subtask | Status | Evidence |\n|---|---|---|\n";
    for (const SubReport& s : subreports) {
        std::string evidence = s.citations.empty()
                                   ? "none"
                                   : "[" + std::to_string(marker_for(s.citations.front())) + "]";
        body += "| " + s.subtask_id + " | " + (s.complete ? "complete" : "incomplete") + " | " +
                evidence + " |\n";
    }
    body += "\n";

    if (rubric_hints) body += "_Scored against rubric: " + rubric_hints->query + "_\n\n";

    std::string combined;
    for (const SubReport& s : subreports) {
        if (!combined.empty()) combined += "; ";
        const std::string prefix = "Outcome: ";
        auto pos = s.findings.find(prefix);
        if (pos != std::string::npos) {
            std::string outcome = s.findings.substr(pos + prefix.size());
            if (!outcome.empty() && outcome.back() == '.') outcome.pop_back();
            combined += outcome;
        } else {
            combined += "incomplete";
        }
    }
    body += "<final_answer>" + combined + "</final_answer>\n\n";

    for (std::size_t i = 0; i < order.size(); ++i) {
        const ToolMemoryEntry* entry = memory.find(order[i]);
        const std::string hash = entry ? entry->digest_hash : "unknown";
        body += "[" + std::to_string(i + 1) + "]: toolmem:" + order[i] + " hash=" + hash + "\n";
    }

    r.body = std::move(body);
    return r;
}

ResearchRun research(const std::string& query, const env::Corpus& corpus,
                     const BackendConfig& backend, int parallelism, std::uint64_t seed,
                     const env::ToolLayerConfig& tools, const env::RolloutLimits& limits) {
    ResearchRun run;
    run.query = query;
    run.backend = to_string(backend.kind);
    run.parallelism = parallelism;
    run.seed = seed;
    run.plan = plan(query, backend);
    auto results = run_subtasks(run.plan, corpus, backend, parallelism, seed, run.memory, tools,
                                limits);
    for (auto& [subreport, trajectory] : results) {
        run.subreports.push_back(std::move(subreport));
        run.trajectories.push_back(std::move(trajectory));
    }
    run.report = synthesize_report(run.subreports, run.memory, backend, nullptr);
    return run;
}

// ---------------------------------------------------------------------------
// Trace persistence

void persist_trace(const ResearchRun& run, const std::string& path) {
    std::vector<json> records;
    records.push_back({{"kind", "meta"},
                       {"version", 1},
                       {"query", run.query},
                       {"backend", run.backend},
                       {"parallelism", run.parallelism},
                       {"seed", run.seed}});
    records.push_back({{"kind", "plan"}, {"plan", run.plan.to_json()}});
    for (std::size_t i = 0; i < run.subreports.size(); ++i) {
        records.push_back({{"kind", "subreport"}, {"subreport", run.subreports[i].to_json()}});
        records.push_back({{"kind", "trajectory"}, {"trajectory", run.trajectories[i].to_json()}});
    }
    records.push_back({{"kind", "memory"}, {"memory", run.memory.to_json()}});
    records.push_back({{"kind", "report"}, {"report", run.report.to_json()}});
    jsonl::write_file(path, records);
}

ResearchRun load_trace(const std::string& path) {
    std::vector<json> records;
    try {
        records = jsonl::read_file(path);
    } catch (const Error& e) {
        if (e.code() == "parse-error") raise("malformed-file", e.what());
        throw;
    }
    ResearchRun run;
    bool have_meta = false, have_plan = false, have_report = false;
    static const std::set<std::string> known_meta_keys = {"kind",        "version", "query",
                                                          "backend",     "seed",    "parallelism"};
    for (const json& r : records) {
        if (!r.is_object() || !r.contains("kind"))
            raise("malformed-file", "trace record without kind");
        const std::string kind = r.at("kind").get<std::string>();
        if (kind == "meta") {
            const int version = r.value("version", -1);
            if (version != 1)
                raise("version-mismatch",
                      "trace version " + std::to_string(version) + " is not supported");
            run.query = r.at("query").get<std::string>();
            run.backend = r.value("backend", "scripted");
            run.parallelism = r.value("parallelism", 1);
            run.seed = r.value("seed", 0ull);
            for (auto it = r.begin(); it != r.end(); ++it)
                if (!known_meta_keys.count(it.key()))
                    run.load_warnings.push_back("ignoring unknown meta field '" + it.key() + "'");
            have_meta = true;
        } else if (kind == "plan") {
            run.plan = Plan::from_json(r.at("plan"));
            have_plan = true;
        } else if (kind == "subreport") {
            run.subreports.push_back(SubReport::from_json(r.at("subreport")));
        } else if (kind == "trajectory") {
            run.trajectories.push_back(env::Trajectory::from_json(r.at("trajectory")));
        } else if (kind == "memory") {
            run.memory = RunMemory::from_json(r.at("memory"));
        } else if (kind == "report") {
            run.report = FinalReport::from_json(r.at("report"));
            have_report = true;
        } else {
            run.load_warnings.push_back("ignoring unknown record kind '" + kind + "'");
        }
    }
    if (!have_meta || !have_plan || !have_report)
        raise("malformed-file", "trace is missing meta, plan, or report records");
    if (run.subreports.size() != run.trajectories.size())
        raise("malformed-file", "subreport/trajectory records are unpaired");
    return run;
}

}  // namespace questlab::orch
