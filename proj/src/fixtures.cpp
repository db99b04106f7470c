#include "questlab/fixtures.hpp"

#include <cstdio>
#include <filesystem>

#include "questlab/jsonl.hpp"

namespace questlab::fixtures {

namespace {

constexpr int kLayers = 6;
constexpr int kWidth = 12;

const char* kSuffixes[kLayers] = {"Holdings", "Works", "Guild", "Syndicate", "Forge", "Circle"};
const char* kYears[4] = {"1995", "2004", "2015", "2023"};

// Relation labels between layer j and j+1; heads are distinct across layers so
// a hop phrase identifies its layer.
const char* kRelations[kLayers - 1][3] = {
    {"licenses_to", "supplies_parts_to", "mentors"},
    {"audits", "finances", "distributes_for"},
    {"hosts", "certifies", "advises"},
    {"insures", "equips", "trains_with"},
    {"sponsors", "archives_for", "charters"},
};

// Target index for edge (source s, label a): in-class wiring so that every
// entity's incoming edges share one label, which keeps hop searches
// discriminative under token-overlap scoring. Shifts (0,1,3) guarantee that
// relaxing any hop leaves at least two final candidates.
int edge_target(int s, int a) {
    static const int shift[3] = {0, 1, 3};
    return 3 * ((s + shift[a]) % 4) + a;
}

std::string entity_id(int layer, int idx) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "e%02d", layer * kWidth + idx);
    return buf;
}

std::string entity_name(int layer, int idx) {
    static const char* consonants[12] = {"V", "Z", "M", "T", "K", "R",
                                         "D", "P", "B", "S", "N", "F"};
    static const char* vowels[6] = {"a", "e", "i", "o", "u", "y"};
    static const char* tails[12] = {"lin", "mor",  "dak", "venn", "tor",  "sel",
                                    "gard", "bryn", "fex", "mund", "rell", "quo"};
    const int n = layer * kWidth + idx;
    std::string stem = std::string(consonants[n % 12]) + vowels[n / 12] +
                       tails[(n * 5 + 3) % 12];
    return stem + " " + kSuffixes[layer];
}

}  // namespace

std::vector<kg::json> demo_graph_records() {
    using kg::json;
    std::vector<json> records;

    // Decoy index pages, one per relation label. They absorb bare-phrase
    // searches (their ids sort before every entity id, winning score ties), so
    // a query must combine a relation phrase with an entity name to reach the
    // real target. Decoys have no edges and never appear on reasoning paths.
    {
        static const char* decoy_words[15] = {"Avar", "Beno", "Cedo", "Dila", "Enor",
                                              "Fipa", "Gozo", "Hemi", "Iruq", "Jasc",
                                              "Kive", "Lumo", "Nopa", "Oqui", "Pyxa"};
        int d = 0;
        for (const auto& layer : kRelations) {
            for (const char* label : layer) {
                char id[8];
                std::snprintf(id, sizeof(id), "d%02d", d % 100);
                const std::string name = std::string("Index ") + decoy_words[d];
                records.push_back({{"kind", "entity"},
                                   {"id", id},
                                   {"name", name},
                                   {"attributes", json::object()},
                                   {"partition", "web"}});
                records.push_back(
                    {{"kind", "document"},
                     {"entity", id},
                     {"text", name + " is a public registry page cataloguing \"" +
                                  kg::relation_phrase(label) +
                                  "\" relationships across the relay network."}});
                ++d;
            }
        }
    }

    for (int layer = 0; layer < kLayers; ++layer) {
        for (int i = 0; i < kWidth; ++i) {
            json attrs = {{"tier", "L" + std::to_string(layer)},
                          {"group", "g" + std::to_string(i % 3)},
                          {"founded", kYears[i / 3]}};
            records.push_back({{"kind", "entity"},
                               {"id", entity_id(layer, i)},
                               {"name", entity_name(layer, i)},
                               {"attributes", attrs},
                               {"partition", "web"}});
        }
    }

    for (int layer = 0; layer + 1 < kLayers; ++layer)
        for (int s = 0; s < kWidth; ++s)
            for (int a = 0; a < 3; ++a)
                records.push_back({{"kind", "edge"},
                                   {"source", entity_id(layer, s)},
                                   {"relation", kRelations[layer][a]},
                                   {"target", entity_id(layer + 1, edge_target(s, a))}});

    for (int layer = 0; layer < kLayers; ++layer) {
        for (int i = 0; i < kWidth; ++i) {
            const std::string name = entity_name(layer, i);
            std::string doc = name + " is a tier L" + std::to_string(layer) + " node in group g" +
                              std::to_string(i % 3) + ", founded in " + kYears[i / 3] +
                              ", part of the relay network.";
            if (layer == 0) {
                doc += " It anchors the relay network at the origin tier.";
            } else {
                for (int s = 0; s < kWidth; ++s)
                    for (int a = 0; a < 3; ++a)
                        if (edge_target(s, a) == i)
                            doc += " " + entity_name(layer - 1, s) + " " +
                                   kg::relation_phrase(kRelations[layer - 1][a]) + " " + name +
                                   ".";
            }
            records.push_back(
                {{"kind", "document"}, {"entity", entity_id(layer, i)}, {"text", doc}});
        }
    }
    return records;
}

kg::KnowledgeGraph demo_graph() { return kg::KnowledgeGraph::from_records(demo_graph_records()); }

kg::TemplateBank demo_template_bank() {
    kg::TemplateBank bank = kg::TemplateBank::defaults();
    for (const auto& layer : kRelations)
        for (const char* label : layer)
            bank.relations[label] = {kg::relation_phrase(label)};
    return bank;
}

std::vector<kg::ObfuscationRule> demo_obfuscation_rules() {
    std::vector<kg::ObfuscationRule> rules;
    rules.push_back({"founded", "2015", "the mid-2010s",
                     {"2013", "2014", "2015", "2016", "2017"}});
    rules.push_back({"founded", "1995", "the mid-1990s",
                     {"1993", "1994", "1995", "1996", "1997"}});
    // Weakening the group collapses two start candidates; always rolled back on
    // this corpus.
    rules.push_back({"group", "g1", "one of the newer groups", {"g1", "g2"}});
    return rules;
}

report::RubricSet default_rubric(const std::string& query) {
    report::RubricSet r;
    r.query = query;
    r.dimension_weight = {{"comprehensiveness", 0.29},
                          {"instruction_following", 0.10},
                          {"insight", 0.44},
                          {"readability", 0.17}};
    r.criterions["comprehensiveness"] = {
        {"covers the key entities", "Every key intermediate entity is named in the report.", 1.0},
        {"states a final answer", "The report commits to one answer inside the final tag.", 0.8}};
    r.criterions["insight"] = {
        {"grounds claims in cited sources", "Claims carry resolvable citations.", 1.0}};
    r.criterions["instruction_following"] = {
        {"stays on the queried subject", "Content matches the question's terms.", 1.0}};
    r.criterions["readability"] = {
        {"uses a clear hierarchical structure", "Headings, lists, and tables are well formed.",
         1.0}};
    r.validate();
    return r;
}

std::string scoring_prompt_text() {
    return R"(System: You are a rigorous, impartial research-report evaluator. You compare two
articles written for the same task, criterion by criterion, and score both with
precise justifications.

**Task**
<task>{task_prompt}</task>

**Articles**
<article_1>{article_1}</article_1>
<article_2>{article_2}</article_2>

**Criteria**
<criteria_list>{criteria_list}</criteria_list>

**Score bands**
0-2: very poor, the criterion is essentially unmet.
2-4: poor, minimally met with clear gaps.
4-6: average, basically met.
6-8: good, met with visible strengths.
8-10: excellent, fully met or exceeded.

**Output format (JSON only)**
{"comprehensiveness": [{"criterion": "[text]", "analysis": "[analysis]",
  "article_1_score": 0, "article_2_score": 0}, ...],
 "insight": [...], "instruction_following": [...], "readability": [...]}
)";
}

std::string verification_prompt_text() {
    return R"(Context: {context}

Within one or two sentences of "{matched_text}", is there an explicit mention of
the forecasting source behind this prediction? A forecasting source is any of:
- a named institution (for example IMF, Goldman Sachs),
- a generic but explicit third party (for example "a research institute"),
- the subject company describing its own plans (for example "the company expects").

Output JSON only: {"result": "yes" or "no", "detail": "brief explanation"}
)";
}

std::vector<TemporalCase> temporal_fixture() {
    const std::string now = "2026-06-30";
    std::vector<TemporalCase> cases;
    auto add = [&](std::string text, bool flagged, bool error, std::string when = "") {
        cases.push_back({std::move(text), when.empty() ? now : when, flagged, error});
    };

    // Predictions about past time points without attribution: tense errors.
    add("By 2025, the global VR training market will reach tens of billions.", true, true);
    add("The sector is expected to double by 2024.", true, true);
    add("Revenue is projected to exceed 4 billion by 2023.", true, true);
    add("Adoption will plateau in 2022 across the region.", true, true);
    add("Output is anticipated to triple by 2025Q1.", true, true);
    add("Margins are expected to recover by 2024Q4.", true, true);
    add("The fleet will surpass 10,000 vehicles by 2021.", true, true);
    add("Subscriptions are projected to hit 2 million in 2023.", true, true);
    add("The standard is expected to be ratified by 2020.", true, true);
    add("Costs will fall below parity in 2024.", true, true);
    add("Exports are projected to lead the market by 2025, analysts keep repeating.", true, true);
    add("The plant will reach full capacity in 2024Q2.", true, true);

    // Predictions about past time points with explicit attribution: flagged by
    // stage 1 but cleared by stage 2.
    add("According to XX organization in 2024, the market is expected to reach tens of "
        "billions by 2025.",
        true, false);
    add("According to the Meridian Institute, capacity will double by 2024.", true, false);
    add("A research institute projected in 2023 that usage is expected to peak by 2025.", true,
        false);
    add("The company expects shipments will pass 1 million by 2024.", true, false);
    add("Analysts at Northbrook Fund said revenue is projected to soften by 2025.", true, false);
    add("As reported by the trade commission, the market will consolidate by 2024.", true, false);
    add("Estimates from the transport ministry suggested traffic will double by 2023.", true,
        false);
    add("According to Halvex Consultancy, margins are expected to stabilize by 2025Q2.", true,
        false);

    // Predictions about future time points: consistent, never flagged.
    add("The global robotics market is expected to reach hundreds of billions by 2027.", false,
        false);
    add("Throughput will double by 2030.", false, false);
    add("The consortium is projected to break even in 2028.", false, false);
    add("Production is anticipated to scale through 2027Q3.", false, false);

    // Past dates without predictive phrasing: plain history.
    add("The market reached ten billion in 2024.", false, false);
    add("In 2023, the group completed the merger.", false, false);
    add("Shipments peaked in 2021Q3 and declined afterward.", false, false);
    add("The framework was ratified in 2019.", false, false);

    // Predictive phrasing without a parseable time point.
    add("The board will revisit the plan after the audit.", false, false);
    add("Demand is expected to vary by region.", false, false);
    add("Management expects to expand the program.", false, false);
    add("The team will publish details soon.", false, false);

    // Word-boundary decoys.
    add("Goodwill impairments totaled 2 billion in 2024.", false, false);
    add("The willow plantation matured in 2020.", false, false);
    add("Details of the 2024 willful misconduct case were sealed.", false, false);
    add("Billie Willnets joined the board in 2023.", false, false);

    // Quarter granularity against a mid-year reference date.
    add("Volume is expected to recover by 2026Q1.", true, true);
    add("According to the Port Authority bulletin, tonnage is expected to normalize by 2026Q1.",
        true, false);
    add("Utilization will return to trend by 2026Q3.", false, false);
    add("The venue will host the expo in 2026.", false, false);

    // Attribution supplied by neighboring sentences inside the context window.
    add("The outlook cited several sources. According to the Meridian Institute, demand was "
        "strong. Capacity is expected to double by 2024.",
        true, false);
    add("Capacity is expected to double by 2024. That claim drew scrutiny. According to the "
        "audit office, the basis was unclear.",
        true, false);
    add("The market will quadruple by 2023. Nobody provided a source for this claim. The "
        "report moved on.",
        true, true);
    add("Analysts at Coveline Group wrote that the index will normalize by 2024. The note "
        "circulated widely.",
        true, false);

    return cases;
}

void write_assets(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(dir + "/prompts");

    jsonl::write_file(dir + "/demo_graph.jsonl", demo_graph_records());
    jsonl::write_text_file(dir + "/templates.json", demo_template_bank().to_json().dump(2) + "\n");
    {
        kg::json rules = kg::json::array();
        for (const kg::ObfuscationRule& r : demo_obfuscation_rules())
            rules.push_back(r.to_json());
        jsonl::write_text_file(dir + "/obfuscation_rules.json", rules.dump(2) + "\n");
    }
    jsonl::write_text_file(dir + "/rubric_default.json",
                           default_rubric("{query}").to_json().dump(2) + "\n");
    jsonl::write_text_file(dir + "/prompts/scoring_prompt.txt", scoring_prompt_text());
    jsonl::write_text_file(dir + "/prompts/verification_prompt.txt", verification_prompt_text());
    {
        std::vector<kg::json> rows;
        for (const TemporalCase& c : temporal_fixture())
            rows.push_back({{"text", c.text},
                            {"now", c.now},
                            {"expect_flagged", c.expect_flagged},
                            {"expect_error", c.expect_error}});
        jsonl::write_file(dir + "/temporal_fixture.jsonl", rows);
    }
}

}  // namespace questlab::fixtures
