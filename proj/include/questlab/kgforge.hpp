#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace questlab::kg {

using json = nlohmann::json;
using EntityId = std::string;

struct Entity {
    EntityId id;
    std::string name;
    std::map<std::string, std::string> attributes;
    std::string partition = "web";  // routing tag: internal | web | academic
};

struct Edge {
    EntityId source;
    std::string relation;
    EntityId target;

    bool operator==(const Edge&) const = default;
};

// Immutable after construction; safe to share across workers.
class KnowledgeGraph {
public:
    // Ingests entity/edge/document records (order-independent) and validates the
    // graph invariants. Record kinds: "entity" {id,name,attributes?,partition?},
    // "edge" {source,relation,target}, "document" {entity,text}.
    static KnowledgeGraph from_records(const std::vector<json>& records);
    static KnowledgeGraph from_file(const std::string& path);

    const std::vector<Entity>& entities() const { return entities_; }
    const std::vector<Edge>& edges() const { return edges_; }

    const Entity& entity(const EntityId& id) const;
    const Entity* find(const EntityId& id) const;
    const Entity* find_by_name(const std::string& name) const;  // normalized lookup
    const std::string& document(const EntityId& id) const;

    const std::vector<std::size_t>& out_edge_indices(const EntityId& id) const;
    bool has_edge_between(const EntityId& a, const EntityId& b) const;  // either direction

    std::size_t entity_count() const { return entities_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    // Fraction of entities carrying `key` whose value equals `value`.
    double selectivity(const std::string& key, const std::string& value) const;

    std::vector<json> to_records() const;

private:
    std::vector<Entity> entities_;  // sorted by id
    std::vector<Edge> edges_;       // sorted by (source, relation, target)
    std::map<EntityId, std::string> documents_;
    std::map<EntityId, std::size_t> by_id_;
    std::map<std::string, EntityId> by_norm_name_;
    std::map<EntityId, std::vector<std::size_t>> out_edges_;
};

// One surface condition on the path's start entity. `display` is the text the
// question shows; `admits` is the set of raw attribute values the condition
// accepts (a single value before obfuscation, possibly several after).
struct Condition {
    std::string key;
    std::string display;
    std::vector<std::string> admits;

    bool operator==(const Condition&) const = default;
};

struct Hop {
    EntityId source;
    std::string relation;
    EntityId target;

    bool operator==(const Hop&) const = default;
};

struct ReasoningPath {
    std::vector<Hop> hops;                   // chain-connected, 1..5
    std::vector<Condition> start_conditions; // on hops.front().source
    EntityId answer_entity;                  // == hops.back().target

    std::vector<EntityId> entity_chain() const;  // start, then each hop target
    json to_json() const;
    static ReasoningPath from_json(const json& j);
};

enum class Difficulty { easy, medium, hard };

Difficulty difficulty_for_hops(int hops);
std::string to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& s);

struct QueryInstance {
    std::string id;
    std::string query_text;
    std::vector<std::string> entity_set;  // key entity names, path order
    std::string answer;
    int hops = 0;
    Difficulty difficulty = Difficulty::easy;
    ReasoningPath provenance;
    std::vector<std::string> obfuscation_log;  // applied rule descriptions

    json to_json() const;
    static QueryInstance from_json(const json& j);
};

enum class RejectReason { none, direct_answer, non_unique_answer, broken_chain };

std::string to_string(RejectReason r);

struct FilterVerdict {
    bool passed = false;
    RejectReason rejected_by = RejectReason::none;
    std::string detail;
};

// Human-readable phrase for a relation label ("licenses_to" -> "licenses to").
std::string relation_phrase(const std::string& label);

// Exhaustive constraint solver, the ground-truth oracle behind necessity,
// uniqueness and filtering. Computes the answer-candidate set for: start
// entities satisfying `conditions`, then one edge per relation in `relations`
// in order. `wildcard_hop` (1-based) relaxes that hop to any relation; 0 keeps
// all hops constrained.
std::vector<EntityId> solve_answers(const KnowledgeGraph& graph,
                                    const std::vector<Condition>& conditions,
                                    const std::vector<std::string>& relations,
                                    int wildcard_hop = 0);

// True iff the full constraint set resolves to exactly the stored answer AND
// deleting any single hop's relation constraint leaves >= 2 candidates.
// Malformed paths (broken chain, unknown entities, empty conditions on a
// multi-entity graph) return false rather than throwing.
bool check_necessity(const KnowledgeGraph& graph, const ReasoningPath& path);

// Samples a constrained reasoning path: reachable (each hop's relation phrase
// appears in the target's document), necessary (check_necessity), shortcut-free
// (no edge between non-adjacent chain entities), leak-safe (no condition text
// contains a downstream entity name), unique-answer. Deterministic in
// (graph, hops, seed); gives up with Error("no-valid-path") after 1000 draws.
ReasoningPath sample_path(const KnowledgeGraph& graph, int hops, std::uint64_t seed);

struct TemplateBank {
    // relation label -> phrase variants; variant 0 is the canonical phrase used
    // for retrievability, later variants are paraphrases.
    std::map<std::string, std::vector<std::string>> relations;
    // question scaffolds with {conditions} and {chain} placeholders
    std::vector<std::string> scaffolds;

    static TemplateBank defaults();
    static TemplateBank from_json(const json& j);
    json to_json() const;
};

// Renders the path into a natural-language question and fills the key entity
// set and answer. The text mentions the start conditions and relation phrases
// but never an intermediate entity name or the answer (enforced by a final
// scan). Deterministic per seed; different seeds may change phrasing but never
// the entity set or answer. A 1-hop path has no strict intermediates, so its
// start entity (identified in the question only by attributes) is the key
// entity.
QueryInstance render_query(const KnowledgeGraph& graph, const ReasoningPath& path,
                           const TemplateBank& bank, std::uint64_t seed);

struct ObfuscationRule {
    std::string key;                  // attribute key the rule targets
    std::string matches;              // exact raw value to weaken
    std::string replacement;          // display text after weakening
    std::vector<std::string> admits;  // raw values the weakened condition accepts

    static std::vector<ObfuscationRule> from_json(const json& j);
    json to_json() const;
};

// Applies eligible rules (attribute selectivity > 0.2) one at a time, keeping a
// rule only if the oracle still resolves to a unique answer; otherwise the rule
// is rolled back and logged. Never changes answer, entity set, or hop count.
QueryInstance obfuscate(const QueryInstance& instance,
                        const std::vector<ObfuscationRule>& rules,
                        const KnowledgeGraph& graph);

// Multi-stage validity filter: direct-answer test, answer-uniqueness oracle,
// then per-hop chain retrievability.
FilterVerdict filter_instance(const QueryInstance& instance, const KnowledgeGraph& graph);

struct SynthOptions {
    int hops = 2;
    int count = 10;
    std::uint64_t seed = 1;
    bool apply_obfuscation = false;
    std::vector<ObfuscationRule> rules;
};

// sample -> render -> (obfuscate) -> filter pipeline; only passing instances
// are emitted. Deterministic in (graph, options).
std::vector<QueryInstance> synthesize(const KnowledgeGraph& graph, const TemplateBank& bank,
                                      const SynthOptions& options);

}  // namespace questlab::kg
