#include "questlab/searchenv.hpp"

#include <algorithm>

#include "questlab/errors.hpp"
#include "questlab/text.hpp"

namespace questlab::env {

namespace {

// Cut at a UTF-8 boundary so snippets never split a codepoint.
std::string snippet_of(const std::string& doc) {
    constexpr std::size_t kSnippetChars = 400;
    if (doc.size() <= kSnippetChars) return doc;
    std::size_t cut = kSnippetChars;
    while (cut > 0 && (static_cast<unsigned char>(doc[cut]) & 0xC0) == 0x80) --cut;
    return doc.substr(0, cut);
}

std::string partition_for(Tool t) {
    switch (t) {
        case Tool::internal_search: return "internal";
        case Tool::web_search: return "web";
        case Tool::academic_search: return "academic";
        default: return "";
    }
}

}  // namespace

std::string to_string(Tool t) {
    switch (t) {
        case Tool::internal_search: return "internal_search";
        case Tool::web_search: return "web_search";
        case Tool::academic_search: return "academic_search";
        case Tool::crawl: return "crawl";
        case Tool::answer: return "answer";
        case Tool::reflect: return "reflect";
    }
    return "web_search";
}

Tool tool_from_string(const std::string& s) {
    if (s == "internal_search") return Tool::internal_search;
    if (s == "web_search") return Tool::web_search;
    if (s == "academic_search") return Tool::academic_search;
    if (s == "crawl") return Tool::crawl;
    if (s == "answer") return Tool::answer;
    if (s == "reflect") return Tool::reflect;
    raise("unknown-tool", "no tool named '" + s + "'");
}

bool is_retrieval(Tool t) {
    return t == Tool::internal_search || t == Tool::web_search || t == Tool::academic_search ||
           t == Tool::crawl;
}

json ToolCall::to_json() const {
    return {{"tool", to_string(tool)}, {"argument", argument}, {"step_index", step_index}};
}

ToolCall ToolCall::from_json(const json& j) {
    return {tool_from_string(j.at("tool").get<std::string>()),
            j.at("argument").get<std::string>(), j.value("step_index", 1)};
}

Observation Observation::error_of(std::string diagnostic) {
    require(!diagnostic.empty(), "invalid-argument", "error observations need a diagnostic");
    Observation o;
    o.status = Status::error;
    o.text = std::move(diagnostic);
    return o;
}

std::string Observation::flatten() const {
    std::string out = text;
    for (const Snippet& s : snippets) {
        if (!out.empty()) out += '\n';
        out += s.text;
    }
    return out;
}

json Observation::to_json() const {
    json j = {{"status", status == Status::ok ? "ok" : "error"},
              {"from_cache", from_cache},
              {"latency_ticks", latency_ticks}};
    if (!snippets.empty()) {
        json arr = json::array();
        for (const Snippet& s : snippets)
            arr.push_back({{"entity", s.entity}, {"score", s.score}, {"text", s.text}});
        j["snippets"] = arr;
    }
    if (!text.empty() || snippets.empty()) j["text"] = text;
    return j;
}

Observation Observation::from_json(const json& j) {
    Observation o;
    o.status = j.at("status").get<std::string>() == "ok" ? Status::ok : Status::error;
    o.from_cache = j.value("from_cache", false);
    o.latency_ticks = j.value("latency_ticks", 0);
    if (j.contains("snippets"))
        for (const auto& s : j.at("snippets"))
            o.snippets.push_back({s.at("entity").get<std::string>(), s.at("score").get<int>(),
                                  s.at("text").get<std::string>()});
    o.text = j.value("text", "");
    return o;
}

json Step::to_json() const {
    return {{"thought", thought},
            {"action", action.to_json()},
            {"observation", observation.to_json()},
            {"format_valid", format_valid},
            {"tool_success", tool_success}};
}

Step Step::from_json(const json& j) {
    Step s;
    s.thought = j.at("thought").get<std::string>();
    s.action = ToolCall::from_json(j.at("action"));
    s.observation = Observation::from_json(j.at("observation"));
    s.format_valid = j.at("format_valid").get<bool>();
    s.tool_success = j.at("tool_success").get<int>();
    return s;
}

json Trajectory::to_json() const {
    json steps_j = json::array();
    for (const Step& s : steps) steps_j.push_back(s.to_json());
    json j = {{"query_id", query_id}, {"seed", seed}, {"steps", steps_j}};
    if (final_answer) j["final_answer"] = *final_answer;
    if (!action_log_probs.empty()) j["action_log_probs"] = action_log_probs;
    if (!features.empty()) {
        j["policy_trace"] = {{"features", features}, {"action_indices", action_indices}};
    }
    return j;
}

Trajectory Trajectory::from_json(const json& j) {
    Trajectory t;
    t.query_id = j.at("query_id").get<std::string>();
    t.seed = j.value("seed", 0ull);
    for (const auto& s : j.at("steps")) t.steps.push_back(Step::from_json(s));
    if (j.contains("final_answer") && !j.at("final_answer").is_null())
        t.final_answer = j.at("final_answer").get<std::string>();
    if (j.contains("action_log_probs"))
        t.action_log_probs = j.at("action_log_probs").get<std::vector<double>>();
    if (j.contains("policy_trace")) {
        t.features = j.at("policy_trace").at("features").get<std::vector<std::vector<double>>>();
        t.action_indices = j.at("policy_trace").at("action_indices").get<std::vector<int>>();
    }
    return t;
}

void ToolLayerConfig::validate() const {
    require(max_retries >= 0 && cache_capacity >= 0 && rate_limit >= 0, "config-invalid",
            "tool layer limits must be >= 0");
    require(failure_injection_rate >= 0.0 && failure_injection_rate <= 1.0, "config-invalid",
            "failure_injection_rate must be in [0,1]");
}

// ---------------------------------------------------------------------------
// Corpus

Corpus::Corpus(const kg::KnowledgeGraph& graph) : graph_(&graph) {
    doc_tokens_.reserve(graph.entity_count());
    for (const kg::Entity& e : graph.entities()) {
        std::vector<std::string> toks = text::tokens(graph.document(e.id));
        std::sort(toks.begin(), toks.end());
        toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
        doc_tokens_.push_back(std::move(toks));
    }
}

std::vector<Snippet> Corpus::search(const std::string& partition, const std::string& query,
                                    int k) const {
    require(k >= 1, "invalid-argument", "k must be >= 1");
    std::vector<std::string> q = text::tokens(query);
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());

    auto sorted_overlap = [](const std::vector<std::string>& a,
                             const std::vector<std::string>& b) {
        int n = 0;
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i] < b[j])
                ++i;
            else if (b[j] < a[i])
                ++j;
            else
                ++n, ++i, ++j;
        }
        return n;
    };

    std::vector<Snippet> scored;
    for (std::size_t i = 0; i < graph_->entities().size(); ++i) {
        const kg::Entity& e = graph_->entities()[i];
        if (!partition.empty() && e.partition != partition) continue;
        scored.push_back({e.id, sorted_overlap(q, doc_tokens_[i]), ""});
    }
    if (scored.empty())
        raise("empty-corpus", "no documents in partition '" + partition + "'");

    // Entities are id-sorted, so a stable sort on score keeps id order on ties.
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Snippet& a, const Snippet& b) { return a.score > b.score; });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    for (Snippet& s : scored) s.text = snippet_of(graph_->document(s.entity));
    return scored;
}

const std::string& Corpus::crawl(const kg::EntityId& id) const { return graph_->document(id); }

// ---------------------------------------------------------------------------
// Tool session

ToolSession::ToolSession(const Corpus& corpus, ToolLayerConfig cfg, Rng rng)
    : corpus_(&corpus), cfg_(cfg), rng_(rng) {
    cfg_.validate();
}

int ToolSession::executed_calls(Tool t) const {
    auto it = executed_.find(t);
    return it == executed_.end() ? 0 : it->second;
}

Observation ToolSession::perform(const ToolCall& call) const {
    if (call.tool == Tool::crawl) {
        const kg::Entity* e = corpus_->graph().find(call.argument);
        if (!e) e = corpus_->graph().find_by_name(call.argument);
        if (!e)
            return Observation::error_of("unknown-entity: nothing to crawl for '" +
                                         call.argument + "'");
        Observation o;
        o.text = corpus_->crawl(e->id);
        return o;
    }
    try {
        Observation o;
        o.snippets = corpus_->search(partition_for(call.tool), call.argument, 5);
        return o;
    } catch (const Error& e) {
        return Observation::error_of(std::string(e.what()));
    }
}

Observation ToolSession::execute(const ToolCall& call) {
    require(is_retrieval(call.tool), "unknown-tool",
            "tool '" + to_string(call.tool) + "' is not routable");

    const std::string key = to_string(call.tool) + "\x1f" + text::normalize(call.argument);
    for (std::size_t i = 0; i < cache_.size(); ++i) {
        if (cache_[i].key == key) {
            CacheEntry hit = cache_[i];
            cache_.erase(cache_.begin() + static_cast<std::ptrdiff_t>(i));
            cache_.insert(cache_.begin(), hit);
            Observation o = hit.value;
            o.from_cache = true;
            o.latency_ticks = 0;
            return o;
        }
    }

    if (executed_calls(call.tool) >= cfg_.rate_limit)
        return Observation::error_of("rate-limited: tool '" + to_string(call.tool) +
                                     "' exceeded " + std::to_string(cfg_.rate_limit) +
                                     " calls for this trajectory");
    ++executed_[call.tool];

    int attempts = 0;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        ++attempts;
        if (rng_.bernoulli(cfg_.failure_injection_rate)) continue;  // injected fault, retry
        Observation o = perform(call);
        o.latency_ticks = attempts;
        if (o.ok() && cfg_.cache_capacity > 0) {
            cache_.insert(cache_.begin(), {key, o});
            if (cache_.size() > static_cast<std::size_t>(cfg_.cache_capacity)) cache_.pop_back();
        }
        return o;
    }
    Observation o = Observation::error_of("exhausted-retries: " + std::to_string(attempts) +
                                          " attempts failed for '" + call.argument + "'");
    o.latency_ticks = attempts;
    return o;
}

// ---------------------------------------------------------------------------
// Emission parsing

std::optional<ToolCall> parse_action(std::string_view raw_emission, int step_index) {
    json j = json::parse(raw_emission, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (!j.contains("tool") || !j.at("tool").is_string()) return std::nullopt;
    if (!j.contains("argument") || !j.at("argument").is_string()) return std::nullopt;
    ToolCall call;
    try {
        call.tool = tool_from_string(j.at("tool").get<std::string>());
    } catch (const Error&) {
        return std::nullopt;
    }
    call.argument = j.at("argument").get<std::string>();
    call.step_index = step_index;
    return call;
}

bool step_format_valid(std::string_view raw_emission) {
    std::optional<ToolCall> call = parse_action(raw_emission, 1);
    if (!call) return false;
    if (call->tool == Tool::answer && call->argument.empty()) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Rollout

std::vector<double> extract_features(const RolloutState& state,
                                     const kg::QueryInstance& instance) {
    std::vector<double> f(kFeatureCount, 0.0);
    f[0] = 1.0;
    const int step = std::clamp(state.step, 1, 8);
    f[static_cast<std::size_t>(step)] = 1.0;
    f[9] = state.last_ok ? 1.0 : 0.0;
    for (std::size_t j = 0; j < state.key_seen.size() && j < 4; ++j)
        if (state.key_seen[j]) f[10 + j] = 1.0;
    switch (instance.difficulty) {
        case kg::Difficulty::easy: f[14] = 1.0; break;
        case kg::Difficulty::medium: f[15] = 1.0; break;
        case kg::Difficulty::hard: f[16] = 1.0; break;
    }
    return f;
}

std::string expand_action(const policy::ActionTemplate& tpl, const kg::QueryInstance& instance,
                          const RolloutState& state) {
    using Kind = policy::ActionTemplate::Kind;
    auto emit = [](const std::string& tool, const std::string& argument) {
        return json{{"tool", tool}, {"argument", argument}}.dump();
    };
    switch (tpl.kind) {
        case Kind::search_start: {
            std::vector<std::string> parts;
            for (const kg::Condition& c : instance.provenance.start_conditions)
                parts.push_back(c.display);
            return emit(tpl.tool, text::join(parts, " "));
        }
        case Kind::search_hop: {
            const auto& hops = instance.provenance.hops;
            std::string phrase;
            if (tpl.index >= 1 && tpl.index <= static_cast<int>(hops.size()))
                phrase = kg::relation_phrase(hops[static_cast<std::size_t>(tpl.index - 1)].relation);
            std::string arg = phrase;
            if (!state.last_top_name.empty()) arg += " " + state.last_top_name;
            return emit(tpl.tool, arg);
        }
        case Kind::search_key_entity: {
            std::string arg;
            if (tpl.index >= 0 && tpl.index < static_cast<int>(instance.entity_set.size()))
                arg = instance.entity_set[static_cast<std::size_t>(tpl.index)];
            return emit(tpl.tool, arg);
        }
        case Kind::search_literal:
            return emit(tpl.tool, tpl.literal);
        case Kind::crawl_top:
            return emit("crawl", state.last_top_entity);
        case Kind::reflect:
            return emit("reflect", "");
        case Kind::answer_top:
            return emit("answer", state.last_top_name);
        case Kind::answer_literal:
            return emit("answer", tpl.literal);
        case Kind::raw_literal:
            return tpl.literal;
    }
    return emit("reflect", "");
}

namespace {

struct Driver {
    const kg::QueryInstance& instance;
    const Corpus& corpus;
    ToolSession session;
    RolloutState state;
    Trajectory trajectory;
    const RolloutLimits& limits;

    Driver(const kg::QueryInstance& inst, const Corpus& corp, const ToolLayerConfig& cfg,
           const RolloutLimits& lims, std::uint64_t seed)
        : instance(inst),
          corpus(corp),
          session(corp, cfg, Rng(Rng::mix(seed, 0x746F6F6C))),
          limits(lims) {
        state.key_seen.assign(instance.entity_set.size(), false);
        trajectory.query_id = instance.id;
        trajectory.seed = seed;
    }

    bool within_limits() const {
        return static_cast<int>(trajectory.steps.size()) < limits.max_steps &&
               state.context_units < limits.max_context_units;
    }

    // Returns true when the trajectory terminated (answer step).
    bool apply(const std::string& raw_emission, const std::string& action_name) {
        const int step_index = static_cast<int>(trajectory.steps.size()) + 1;
        Step step;
        step.thought = "deciding on " + action_name;
        step.format_valid = step_format_valid(raw_emission);

        std::optional<ToolCall> parsed = parse_action(raw_emission, step_index);
        bool terminal = false;

        if (!parsed) {
            step.action = {Tool::reflect, std::string(raw_emission), step_index};
            step.observation = Observation::error_of("unparseable action emission");
        } else {
            step.action = *parsed;
            if (parsed->tool == Tool::answer) {
                terminal = true;  // an answer attempt always ends the trajectory
                if (step.format_valid) {
                    step.observation.text = "answer recorded";
                    trajectory.final_answer = parsed->argument;
                } else {
                    step.observation = Observation::error_of("empty answer emission");
                }
            } else if (parsed->tool == Tool::reflect) {
                step.observation.text = "reflection recorded";
            } else {
                step.observation = session.execute(*parsed);
            }
        }

        step.tool_success = step.observation.ok() ? 1 : 0;

        // State update for the next decision.
        state.last_ok = step.observation.ok();
        if (step.observation.ok()) {
            if (!step.observation.snippets.empty()) {
                state.last_top_entity = step.observation.snippets.front().entity;
                state.last_top_name = corpus.graph().entity(state.last_top_entity).name;
            } else if (step.action.tool == Tool::crawl) {
                const kg::Entity* e = corpus.graph().find(step.action.argument);
                if (!e) e = corpus.graph().find_by_name(step.action.argument);
                if (e) {
                    state.last_top_entity = e->id;
                    state.last_top_name = e->name;
                }
            }
        }
        const std::string visible = step.thought + "\n" + step.observation.flatten();
        for (std::size_t j = 0; j < instance.entity_set.size(); ++j)
            if (!state.key_seen[j] && text::contains_norm(visible, instance.entity_set[j]))
                state.key_seen[j] = true;

        state.context_units += 1 + static_cast<long>(step.observation.flatten().size());
        state.step = step_index + 1;
        trajectory.steps.push_back(std::move(step));
        return terminal;
    }
};

}  // namespace

Trajectory rollout(const policy::PolicyParams& params, const kg::QueryInstance& instance,
                   const Corpus& corpus, const ToolLayerConfig& cfg, const RolloutLimits& limits,
                   std::uint64_t seed, bool greedy) {
    require(limits.max_steps >= 1, "invalid-argument", "max_steps must be >= 1");
    Driver driver(instance, corpus, cfg, limits, seed);
    Rng action_rng(Rng::mix(seed, 0x61637431));

    while (driver.within_limits()) {
        const std::vector<double> feats = extract_features(driver.state, instance);
        const int action =
            greedy ? params.argmax(feats) : params.sample(feats, action_rng);
        const double logprob = params.log_prob(feats, action);
        const policy::ActionTemplate& tpl = params.vocabulary[static_cast<std::size_t>(action)];

        driver.trajectory.action_log_probs.push_back(logprob);
        driver.trajectory.features.push_back(feats);
        driver.trajectory.action_indices.push_back(action);

        if (driver.apply(expand_action(tpl, instance, driver.state), tpl.name())) break;
    }
    return driver.trajectory;
}

Trajectory rollout_scripted(const std::vector<policy::ActionTemplate>& script,
                            const kg::QueryInstance& instance, const Corpus& corpus,
                            const ToolLayerConfig& cfg, const RolloutLimits& limits,
                            std::uint64_t seed) {
    require(limits.max_steps >= 1, "invalid-argument", "max_steps must be >= 1");
    Driver driver(instance, corpus, cfg, limits, seed);
    for (const policy::ActionTemplate& tpl : script) {
        if (!driver.within_limits()) break;
        if (driver.apply(expand_action(tpl, instance, driver.state), tpl.name())) break;
    }
    return driver.trajectory;
}

}  // namespace questlab::env
