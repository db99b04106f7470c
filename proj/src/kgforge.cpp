#include "questlab/kgforge.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "questlab/errors.hpp"
#include "questlab/jsonl.hpp"
#include "questlab/rng.hpp"
#include "questlab/text.hpp"

namespace questlab::kg {

namespace {

bool condition_satisfied(const Entity& e, const Condition& c) {
    auto it = e.attributes.find(c.key);
    if (it == e.attributes.end()) return false;
    return std::find(c.admits.begin(), c.admits.end(), it->second) != c.admits.end();
}

bool all_conditions_satisfied(const Entity& e, const std::vector<Condition>& cs) {
    for (const auto& c : cs)
        if (!condition_satisfied(e, c)) return false;
    return true;
}

std::string condition_fragment(const Condition& c) {
    return "its " + c.key + " is \"" + c.display + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------
// KnowledgeGraph

KnowledgeGraph KnowledgeGraph::from_records(const std::vector<json>& records) {
    KnowledgeGraph g;
    std::vector<Edge> pending_edges;

    for (const auto& r : records) {
        if (!r.is_object() || !r.contains("kind"))
            raise("parse-error", "record without kind: " + r.dump());
        const std::string kind = r.at("kind").get<std::string>();
        if (kind == "entity") {
            Entity e;
            e.id = r.at("id").get<std::string>();
            e.name = r.at("name").get<std::string>();
            if (r.contains("attributes"))
                for (auto it = r.at("attributes").begin(); it != r.at("attributes").end(); ++it)
                    e.attributes[it.key()] = it.value().get<std::string>();
            if (r.contains("partition")) e.partition = r.at("partition").get<std::string>();
            g.entities_.push_back(std::move(e));
        } else if (kind == "edge") {
            pending_edges.push_back({r.at("source").get<std::string>(),
                                     r.at("relation").get<std::string>(),
                                     r.at("target").get<std::string>()});
        } else if (kind == "document") {
            const auto id = r.at("entity").get<std::string>();
            if (g.documents_.count(id))
                raise("duplicate-entity", "second document for entity " + id);
            g.documents_[id] = r.at("text").get<std::string>();
        } else {
            raise("parse-error", "unknown record kind '" + kind + "'");
        }
    }

    std::sort(g.entities_.begin(), g.entities_.end(),
              [](const Entity& a, const Entity& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < g.entities_.size(); ++i) {
        const Entity& e = g.entities_[i];
        if (g.by_id_.count(e.id)) raise("duplicate-entity", "duplicate entity id " + e.id);
        const std::string norm = text::normalize(e.name);
        if (norm.empty()) raise("duplicate-entity", "entity " + e.id + " has an empty name");
        if (g.by_norm_name_.count(norm))
            raise("duplicate-entity", "entity name collides after normalization: " + e.name);
        g.by_id_[e.id] = i;
        g.by_norm_name_[norm] = e.id;
    }

    for (const Edge& e : pending_edges) {
        if (!g.by_id_.count(e.source))
            raise("dangling-edge", "edge source " + e.source + " is not an entity");
        if (!g.by_id_.count(e.target))
            raise("dangling-edge", "edge target " + e.target + " is not an entity");
    }
    std::sort(pending_edges.begin(), pending_edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.source, a.relation, a.target) < std::tie(b.source, b.relation, b.target);
    });
    pending_edges.erase(std::unique(pending_edges.begin(), pending_edges.end()),
                        pending_edges.end());
    g.edges_ = std::move(pending_edges);

    for (const Entity& e : g.entities_) {
        auto it = g.documents_.find(e.id);
        if (it == g.documents_.end() || it->second.empty())
            raise("empty-document", "entity " + e.id + " has no document");
        if (!text::contains_norm(it->second, e.name))
            raise("empty-document",
                  "document for " + e.id + " does not mention its canonical name");
    }
    for (const auto& [id, doc] : g.documents_) {
        (void)doc;
        if (!g.by_id_.count(id)) raise("dangling-edge", "document for unknown entity " + id);
    }

    for (std::size_t i = 0; i < g.edges_.size(); ++i)
        g.out_edges_[g.edges_[i].source].push_back(i);

    return g;
}

KnowledgeGraph KnowledgeGraph::from_file(const std::string& path) {
    return from_records(jsonl::read_file(path));
}

const Entity* KnowledgeGraph::find(const EntityId& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &entities_[it->second];
}

const Entity& KnowledgeGraph::entity(const EntityId& id) const {
    const Entity* e = find(id);
    if (!e) raise("unknown-entity", "no entity " + id);
    return *e;
}

const Entity* KnowledgeGraph::find_by_name(const std::string& name) const {
    auto it = by_norm_name_.find(text::normalize(name));
    return it == by_norm_name_.end() ? nullptr : find(it->second);
}

const std::string& KnowledgeGraph::document(const EntityId& id) const {
    auto it = documents_.find(id);
    if (it == documents_.end()) raise("unknown-entity", "no document for " + id);
    return it->second;
}

const std::vector<std::size_t>& KnowledgeGraph::out_edge_indices(const EntityId& id) const {
    static const std::vector<std::size_t> empty;
    auto it = out_edges_.find(id);
    return it == out_edges_.end() ? empty : it->second;
}

bool KnowledgeGraph::has_edge_between(const EntityId& a, const EntityId& b) const {
    for (std::size_t idx : out_edge_indices(a))
        if (edges_[idx].target == b) return true;
    for (std::size_t idx : out_edge_indices(b))
        if (edges_[idx].target == a) return true;
    return false;
}

double KnowledgeGraph::selectivity(const std::string& key, const std::string& value) const {
    std::size_t holders = 0, sharers = 0;
    for (const Entity& e : entities_) {
        auto it = e.attributes.find(key);
        if (it == e.attributes.end()) continue;
        ++holders;
        if (it->second == value) ++sharers;
    }
    return holders == 0 ? 0.0 : static_cast<double>(sharers) / static_cast<double>(holders);
}

std::vector<json> KnowledgeGraph::to_records() const {
    std::vector<json> out;
    for (const Entity& e : entities_) {
        json attrs = json::object();
        for (const auto& [k, v] : e.attributes) attrs[k] = v;
        out.push_back({{"kind", "entity"},
                       {"id", e.id},
                       {"name", e.name},
                       {"attributes", attrs},
                       {"partition", e.partition}});
    }
    for (const Edge& e : edges_)
        out.push_back({{"kind", "edge"},
                       {"source", e.source},
                       {"relation", e.relation},
                       {"target", e.target}});
    for (const Entity& e : entities_)
        out.push_back({{"kind", "document"}, {"entity", e.id}, {"text", documents_.at(e.id)}});
    return out;
}

// ---------------------------------------------------------------------------
// Paths and instances

std::vector<EntityId> ReasoningPath::entity_chain() const {
    std::vector<EntityId> chain;
    if (hops.empty()) return chain;
    chain.push_back(hops.front().source);
    for (const Hop& h : hops) chain.push_back(h.target);
    return chain;
}

json ReasoningPath::to_json() const {
    json hops_j = json::array();
    for (const Hop& h : hops)
        hops_j.push_back({{"source", h.source}, {"relation", h.relation}, {"target", h.target}});
    json conds_j = json::array();
    for (const Condition& c : start_conditions)
        conds_j.push_back({{"key", c.key}, {"display", c.display}, {"admits", c.admits}});
    return {{"hops", hops_j}, {"start_conditions", conds_j}, {"answer_entity", answer_entity}};
}

ReasoningPath ReasoningPath::from_json(const json& j) {
    ReasoningPath p;
    for (const auto& h : j.at("hops"))
        p.hops.push_back({h.at("source").get<std::string>(), h.at("relation").get<std::string>(),
                          h.at("target").get<std::string>()});
    for (const auto& c : j.at("start_conditions"))
        p.start_conditions.push_back({c.at("key").get<std::string>(),
                                      c.at("display").get<std::string>(),
                                      c.at("admits").get<std::vector<std::string>>()});
    p.answer_entity = j.at("answer_entity").get<std::string>();
    return p;
}

Difficulty difficulty_for_hops(int hops) {
    if (hops == 1 || hops == 2) return Difficulty::easy;
    if (hops == 3) return Difficulty::medium;
    if (hops == 4 || hops == 5) return Difficulty::hard;
    raise("invalid-argument", "hop count out of range: " + std::to_string(hops));
}

std::string to_string(Difficulty d) {
    switch (d) {
        case Difficulty::easy: return "easy";
        case Difficulty::medium: return "medium";
        case Difficulty::hard: return "hard";
    }
    return "easy";
}

Difficulty difficulty_from_string(const std::string& s) {
    if (s == "easy") return Difficulty::easy;
    if (s == "medium") return Difficulty::medium;
    if (s == "hard") return Difficulty::hard;
    raise("parse-error", "unknown difficulty '" + s + "'");
}

json QueryInstance::to_json() const {
    return {{"id", id},
            {"query", query_text},
            {"entities", entity_set},
            {"answer", answer},
            {"hops", hops},
            {"difficulty", to_string(difficulty)},
            {"provenance", provenance.to_json()},
            {"obfuscation_log", obfuscation_log}};
}

QueryInstance QueryInstance::from_json(const json& j) {
    QueryInstance q;
    q.id = j.at("id").get<std::string>();
    q.query_text = j.at("query").get<std::string>();
    q.entity_set = j.at("entities").get<std::vector<std::string>>();
    q.answer = j.at("answer").get<std::string>();
    q.hops = j.at("hops").get<int>();
    q.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    if (j.contains("provenance")) q.provenance = ReasoningPath::from_json(j.at("provenance"));
    if (j.contains("obfuscation_log"))
        q.obfuscation_log = j.at("obfuscation_log").get<std::vector<std::string>>();
    return q;
}

std::string to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "none";
        case RejectReason::direct_answer: return "direct_answer";
        case RejectReason::non_unique_answer: return "non_unique_answer";
        case RejectReason::broken_chain: return "broken_chain";
    }
    return "none";
}

std::string relation_phrase(const std::string& label) {
    std::string out = label;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

// ---------------------------------------------------------------------------
// Oracle

std::vector<EntityId> solve_answers(const KnowledgeGraph& graph,
                                    const std::vector<Condition>& conditions,
                                    const std::vector<std::string>& relations,
                                    int wildcard_hop) {
    std::set<EntityId> frontier;
    for (const Entity& e : graph.entities())
        if (all_conditions_satisfied(e, conditions)) frontier.insert(e.id);

    for (std::size_t h = 1; h <= relations.size(); ++h) {
        std::set<EntityId> next;
        const bool any_relation = (static_cast<int>(h) == wildcard_hop);
        for (const EntityId& id : frontier) {
            for (std::size_t idx : graph.out_edge_indices(id)) {
                const Edge& e = graph.edges()[idx];
                if (any_relation || e.relation == relations[h - 1]) next.insert(e.target);
            }
        }
        frontier = std::move(next);
        if (frontier.empty()) break;
    }
    return {frontier.begin(), frontier.end()};
}

bool check_necessity(const KnowledgeGraph& graph, const ReasoningPath& path) {
    if (path.hops.empty() || path.hops.size() > 5) return false;
    for (std::size_t i = 0; i < path.hops.size(); ++i) {
        if (!graph.find(path.hops[i].source) || !graph.find(path.hops[i].target)) return false;
        if (i > 0 && path.hops[i].source != path.hops[i - 1].target) return false;
    }
    if (path.answer_entity != path.hops.back().target) return false;

    std::vector<std::string> relations;
    for (const Hop& h : path.hops) relations.push_back(h.relation);

    // Full constraint set must identify exactly the stored answer...
    std::vector<EntityId> full = solve_answers(graph, path.start_conditions, relations);
    if (full.size() != 1 || full.front() != path.answer_entity) return false;

    // ...and dropping any one hop must leave the answer under-determined.
    for (int h = 1; h <= static_cast<int>(relations.size()); ++h) {
        std::vector<EntityId> relaxed =
            solve_answers(graph, path.start_conditions, relations, h);
        if (relaxed.size() < 2) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

bool path_is_shortcut_free(const KnowledgeGraph& graph, const std::vector<EntityId>& chain) {
    for (std::size_t i = 0; i < chain.size(); ++i)
        for (std::size_t j = i + 2; j < chain.size(); ++j)
            if (graph.has_edge_between(chain[i], chain[j])) return false;
    return true;
}

bool reachable_in_documents(const KnowledgeGraph& graph, const std::vector<Hop>& hops) {
    for (const Hop& h : hops)
        if (!text::contains_norm(graph.document(h.target), relation_phrase(h.relation)))
            return false;
    return true;
}

// No condition text may reveal a chain entity or the answer by substring.
bool conditions_leak_names(const KnowledgeGraph& graph, const std::vector<Condition>& conds,
                           const std::vector<EntityId>& chain) {
    for (const EntityId& id : chain) {
        const std::string& name = graph.entity(id).name;
        for (const Condition& c : conds)
            if (text::contains_norm(c.display, name)) return true;
    }
    return false;
}

}  // namespace

ReasoningPath sample_path(const KnowledgeGraph& graph, int hops, std::uint64_t seed) {
    require(hops >= 1 && hops <= 5, "invalid-argument",
            "hop count must be in [1,5], got " + std::to_string(hops));
    require(graph.entity_count() > 0, "no-valid-path", "graph is empty");

    constexpr int kMaxDraws = 1000;
    Rng rng(Rng::mix(seed, 0x70617468));  // stream tag for path sampling

    for (int draw = 0; draw < kMaxDraws; ++draw) {
        const Entity& start = graph.entities()[rng.index(graph.entity_count())];

        ReasoningPath path;
        EntityId current = start.id;
        std::set<EntityId> visited{current};
        bool dead_end = false;
        for (int i = 0; i < hops; ++i) {
            std::vector<std::size_t> options;
            for (std::size_t idx : graph.out_edge_indices(current))
                if (!visited.count(graph.edges()[idx].target)) options.push_back(idx);
            if (options.empty()) {
                dead_end = true;
                break;
            }
            const Edge& e = graph.edges()[options[rng.index(options.size())]];
            path.hops.push_back({e.source, e.relation, e.target});
            visited.insert(e.target);
            current = e.target;
        }
        if (dead_end) continue;
        path.answer_entity = current;

        for (const auto& [k, v] : start.attributes)
            path.start_conditions.push_back({k, v, {v}});

        const std::vector<EntityId> chain = path.entity_chain();
        if (conditions_leak_names(graph, path.start_conditions, chain)) continue;
        if (!reachable_in_documents(graph, path.hops)) continue;
        if (!path_is_shortcut_free(graph, chain)) continue;
        if (!check_necessity(graph, path)) continue;
        return path;
    }
    raise("no-valid-path", "no valid " + std::to_string(hops) + "-hop path after " +
                               std::to_string(kMaxDraws) + " draws");
}

// ---------------------------------------------------------------------------
// Rendering

TemplateBank TemplateBank::defaults() {
    TemplateBank bank;
    bank.scaffolds = {
        "Start from the entity where {conditions}. {chain} What entity do you reach?",
        "Consider the entity whose record shows {conditions}. {chain} Name the entity you arrive at.",
        "An entity is described as follows: {conditions}. {chain} Which entity results?",
    };
    return bank;
}

TemplateBank TemplateBank::from_json(const json& j) {
    TemplateBank bank;
    if (j.contains("relations"))
        for (auto it = j.at("relations").begin(); it != j.at("relations").end(); ++it)
            bank.relations[it.key()] = it.value().get<std::vector<std::string>>();
    if (j.contains("scaffolds"))
        bank.scaffolds = j.at("scaffolds").get<std::vector<std::string>>();
    if (bank.scaffolds.empty()) bank.scaffolds = defaults().scaffolds;
    return bank;
}

json TemplateBank::to_json() const {
    json rel = json::object();
    for (const auto& [k, v] : relations) rel[k] = v;
    return {{"relations", rel}, {"scaffolds", scaffolds}};
}

namespace {

std::string replace_placeholder(std::string s, std::string_view key, const std::string& value) {
    const std::string tag = "{" + std::string(key) + "}";
    auto pos = s.find(tag);
    if (pos != std::string::npos) s.replace(pos, tag.size(), value);
    return s;
}

}  // namespace

QueryInstance render_query(const KnowledgeGraph& graph, const ReasoningPath& path,
                           const TemplateBank& bank, std::uint64_t seed) {
    require(!path.hops.empty(), "invalid-argument", "path has no hops");
    for (const Hop& h : path.hops)
        if (!bank.relations.count(h.relation))
            raise("missing-template", "no template for relation '" + h.relation + "'");

    Rng rng(Rng::mix(seed, 0x72656E64));  // render stream

    std::vector<std::string> cond_parts;
    for (const Condition& c : path.start_conditions) cond_parts.push_back(condition_fragment(c));
    const std::string conditions = text::join(cond_parts, ", and ");

    std::vector<std::string> hop_parts;
    for (const Hop& h : path.hops) {
        // The canonical phrase (variant 0) is the retrievable one; it always
        // appears in quotes so the chain stays searchable. Paraphrasing varies
        // the surrounding scaffold, never the phrase itself.
        const auto& variants = bank.relations.at(h.relation);
        hop_parts.push_back("\"" + variants.front() + "\"");
    }
    static const std::vector<std::string> connectives = {"Follow", "Trace", "Chase the link"};
    const std::string connective = connectives[rng.index(connectives.size())];
    std::string chain = connective + " " + text::join(hop_parts, ", then ") + ".";

    std::string scaffold = bank.scaffolds[rng.index(bank.scaffolds.size())];
    std::string question = replace_placeholder(scaffold, "conditions", conditions);
    question = replace_placeholder(question, "chain", chain);

    QueryInstance q;
    q.query_text = question;
    q.hops = static_cast<int>(path.hops.size());
    q.difficulty = difficulty_for_hops(q.hops);
    q.provenance = path;

    const std::vector<EntityId> entity_chain = path.entity_chain();
    if (entity_chain.size() == 2) {
        q.entity_set.push_back(graph.entity(entity_chain.front()).name);
    } else {
        for (std::size_t i = 1; i + 1 < entity_chain.size(); ++i)
            q.entity_set.push_back(graph.entity(entity_chain[i]).name);
    }
    q.answer = graph.entity(path.answer_entity).name;

    for (const std::string& name : q.entity_set)
        require(!text::contains_norm(q.query_text, name), "invalid-argument",
                "rendered question leaks key entity '" + name + "'");
    require(!text::contains_norm(q.query_text, q.answer), "invalid-argument",
            "rendered question leaks the answer");

    return q;
}

// ---------------------------------------------------------------------------
// Obfuscation

std::vector<ObfuscationRule> ObfuscationRule::from_json(const json& j) {
    std::vector<ObfuscationRule> rules;
    for (const auto& r : j) {
        ObfuscationRule rule;
        rule.key = r.at("key").get<std::string>();
        rule.matches = r.at("matches").get<std::string>();
        rule.replacement = r.at("replacement").get<std::string>();
        rule.admits = r.at("admits").get<std::vector<std::string>>();
        rules.push_back(std::move(rule));
    }
    return rules;
}

json ObfuscationRule::to_json() const {
    return {{"key", key}, {"matches", matches}, {"replacement", replacement}, {"admits", admits}};
}

QueryInstance obfuscate(const QueryInstance& instance,
                        const std::vector<ObfuscationRule>& rules,
                        const KnowledgeGraph& graph) {
    QueryInstance out = instance;
    std::vector<std::string> relations;
    for (const Hop& h : out.provenance.hops) relations.push_back(h.relation);

    for (const ObfuscationRule& rule : rules) {
        auto cond = std::find_if(out.provenance.start_conditions.begin(),
                                 out.provenance.start_conditions.end(), [&](const Condition& c) {
                                     return c.key == rule.key && c.display == rule.matches;
                                 });
        if (cond == out.provenance.start_conditions.end()) continue;
        if (graph.selectivity(rule.key, rule.matches) <= 0.2) continue;  // not eligible

        Condition weakened = *cond;
        weakened.display = rule.replacement;
        weakened.admits = rule.admits;

        std::vector<Condition> trial = out.provenance.start_conditions;
        trial[static_cast<std::size_t>(cond - out.provenance.start_conditions.begin())] = weakened;

        std::vector<EntityId> candidates = solve_answers(graph, trial, relations);
        if (candidates.size() == 1 && candidates.front() == out.provenance.answer_entity) {
            const std::string old_fragment = condition_fragment(*cond);
            *cond = weakened;
            const std::string new_fragment = condition_fragment(*cond);
            auto pos = out.query_text.find(old_fragment);
            if (pos != std::string::npos)
                out.query_text.replace(pos, old_fragment.size(), new_fragment);
            out.obfuscation_log.push_back("applied " + rule.key + ": \"" + rule.matches +
                                          "\" -> \"" + rule.replacement + "\"");
        } else {
            out.obfuscation_log.push_back("rolled-back " + rule.key + ": \"" + rule.matches +
                                          "\" (answer no longer unique)");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Filtering

FilterVerdict filter_instance(const QueryInstance& instance, const KnowledgeGraph& graph) {
    const ReasoningPath& path = instance.provenance;
    if (path.hops.empty())
        return {false, RejectReason::broken_chain, "instance has no provenance path"};

    // Direct-answer test: the answer's own document restating every surface
    // constraint means one search nails it without multi-step reasoning.
    if (graph.find(path.answer_entity)) {
        const std::string& answer_doc = graph.document(path.answer_entity);
        bool all_present = true;
        for (const Condition& c : path.start_conditions)
            if (!text::contains_norm(answer_doc, c.display)) all_present = false;
        for (const Hop& h : path.hops)
            if (!text::contains_norm(answer_doc, relation_phrase(h.relation)))
                all_present = false;
        if (all_present)
            return {false, RejectReason::direct_answer,
                    "answer document restates every surface constraint"};
    }

    std::vector<std::string> relations;
    for (const Hop& h : path.hops) relations.push_back(h.relation);
    std::vector<EntityId> candidates = solve_answers(graph, path.start_conditions, relations);
    if (candidates.size() >= 2)
        return {false, RejectReason::non_unique_answer,
                "oracle finds " + std::to_string(candidates.size()) + " answers"};

    for (const Hop& h : path.hops) {
        if (!graph.find(h.target))
            return {false, RejectReason::broken_chain, "hop target missing: " + h.target};
        if (!text::contains_norm(graph.document(h.target), relation_phrase(h.relation)))
            return {false, RejectReason::broken_chain,
                    "relation phrase '" + relation_phrase(h.relation) +
                        "' absent from document of " + h.target};
    }

    if (candidates.size() != 1 || graph.entity(candidates.front()).name != instance.answer)
        return {false, RejectReason::non_unique_answer,
                "oracle does not resolve to the stored answer"};

    return {true, RejectReason::none, ""};
}

// ---------------------------------------------------------------------------
// Pipeline

std::vector<QueryInstance> synthesize(const KnowledgeGraph& graph, const TemplateBank& bank,
                                      const SynthOptions& options) {
    std::vector<QueryInstance> out;
    std::set<std::string> signatures;
    const int max_attempts = options.count * 50 + 50;

    for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < options.count;
         ++attempt) {
        const std::uint64_t draw_seed = Rng::mix(options.seed, static_cast<std::uint64_t>(attempt));
        ReasoningPath path = sample_path(graph, options.hops, draw_seed);

        std::string signature;
        for (const EntityId& id : path.entity_chain()) signature += id + "|";
        for (const Hop& h : path.hops) signature += h.relation + "|";
        if (!signatures.insert(signature).second && attempt < max_attempts / 2)
            continue;  // prefer distinct paths while attempts remain

        QueryInstance q = render_query(graph, path, bank, draw_seed);

        if (options.apply_obfuscation) q = obfuscate(q, options.rules, graph);

        FilterVerdict verdict = filter_instance(q, graph);
        if (!verdict.passed) continue;

        char buf[32];
        std::snprintf(buf, sizeof(buf), "q%04d-%dh", static_cast<int>(out.size()), options.hops);
        q.id = buf;
        out.push_back(std::move(q));
    }
    if (static_cast<int>(out.size()) < options.count)
        raise("no-valid-path", "only synthesized " + std::to_string(out.size()) + " of " +
                                   std::to_string(options.count) + " instances");
    return out;
}

}  // namespace questlab::kg
