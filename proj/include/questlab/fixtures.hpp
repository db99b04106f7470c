#pragma once

#include <string>
#include <vector>

#include "questlab/kgforge.hpp"
#include "questlab/reportrewards.hpp"

namespace questlab::fixtures {

// Bundled 72-entity layered demo graph: six layers of twelve entities, three
// relation labels between consecutive layers, attribute triples (tier, group,
// founded) unique per entity, and documents that restate each incoming edge.
std::vector<kg::json> demo_graph_records();
kg::KnowledgeGraph demo_graph();

// Phrase bank covering every demo relation label.
kg::TemplateBank demo_template_bank();

// Rules exercised by the demo corpus: the year rule applies cleanly, the group
// rule breaks uniqueness and rolls back.
std::vector<kg::ObfuscationRule> demo_obfuscation_rules();

// Rubric whose criteria the rule scorer understands.
report::RubricSet default_rubric(const std::string& query);

std::string scoring_prompt_text();
std::string verification_prompt_text();

struct TemporalCase {
    std::string text;        // may span several sentences (context window)
    std::string now;         // ISO date
    bool expect_flagged;     // stage 1 fires on some sentence
    bool expect_error;       // stage 2 confirms a tense error
};

// Labeled corpus (>= 40 cases) covering predictive statements about past time
// points with and without attribution, future predictions, and decoys.
std::vector<TemporalCase> temporal_fixture();

// Writes every bundled asset (graph, templates, rules, rubric, prompts,
// temporal fixture) under `dir`.
void write_assets(const std::string& dir);

}  // namespace questlab::fixtures
