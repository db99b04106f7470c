#include <doctest.h>

#include <cmath>

#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/reportrewards.hpp"
#include "questlab/rng.hpp"

using namespace questlab;
using report::Citation;
using report::CriterionScores;
using report::Report;
using report::RubricSet;

namespace {

RubricSet sample_rubric() {
    RubricSet r;
    r.query = "How did the harbor expand?";
    r.dimension_weight = {{"comprehensiveness", 0.29},
                          {"instruction_following", 0.10},
                          {"insight", 0.44},
                          {"readability", 0.17}};
    r.criterions["comprehensiveness"] = {{"covers causes", "", 0.6}, {"covers effects", "", 0.8}};
    r.criterions["insight"] = {{"depth of analysis", "", 1.0}};
    r.criterions["instruction_following"] = {{"subject focus", "", 1.2}};
    r.criterions["readability"] = {{"structure", "", 0.8}};
    return r;
}

CriterionScores uniform_scores(const RubricSet& rubric, double value) {
    CriterionScores scores;
    for (const auto& [dim, list] : rubric.criterions)
        for (const auto& c : list) scores.set(dim, c.criterion, value);
    return scores;
}

const char* kCleanReport = R"(# Harbor Study

## Findings

The harbor expanded in three phases [1]. Dredging began early [2].

1. First phase
2. Second phase
3. Third phase

| Phase | Year | Outcome |
|---|---|---|
| one | 1990 | pier |
| two | 2001 | docks |

<final_answer>The harbor tripled its capacity.</final_answer>

[1]: survey:coastal hash=aa
[2]: archive:dredging hash=bb
)";

}  // namespace

TEST_CASE("race_score aggregates criterion-weighted dimensions") {
    RubricSet rubric = sample_rubric();

    SUBCASE("all tens give the maximum") {
        CHECK(report::race_score(uniform_scores(rubric, 10.0), rubric) == doctest::Approx(1.0));
    }

    SUBCASE("a constant score is invariant to the weights") {
        CHECK(report::race_score(uniform_scores(rubric, 5.0), rubric) == doctest::Approx(0.5));
        RubricSet reweighted = rubric;
        reweighted.dimension_weight["insight"] = 3.0;
        reweighted.criterions["insight"][0].weight = 9.9;
        CHECK(report::race_score(uniform_scores(reweighted, 5.0), reweighted) ==
              doctest::Approx(0.5));
    }

    SUBCASE("dimension weights gate the contribution") {
        // Perfect comprehensiveness, zero elsewhere: 0.29 of the mass.
        CriterionScores scores = uniform_scores(rubric, 0.0);
        for (const auto& c : rubric.criterions.at("comprehensiveness"))
            scores.set("comprehensiveness", c.criterion, 10.0);
        CHECK(report::race_score(scores, rubric) == doctest::Approx(0.29).epsilon(1e-12));
    }

    SUBCASE("uniform rescaling of criterion weights within a dimension is invisible") {
        CriterionScores scores;
        Rng rng(3);
        for (const auto& [dim, list] : rubric.criterions)
            for (const auto& c : list)
                scores.set(dim, c.criterion, static_cast<double>(rng.below(11)));
        const double base = report::race_score(scores, rubric);
        RubricSet scaled = rubric;
        for (auto& c : scaled.criterions["comprehensiveness"]) c.weight *= 7.5;
        CHECK(report::race_score(scores, scaled) == doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("missing criterion scores raise") {
        CriterionScores scores = uniform_scores(rubric, 8.0);
        RubricSet extended = rubric;
        extended.criterions["insight"].push_back({"novel angle", "", 0.5});
        CHECK_THROWS_WITH_AS(report::race_score(scores, extended),
                             doctest::Contains("missing-criterion-score"), Error);
    }

    SUBCASE("rubric file round trip") {
        RubricSet back = RubricSet::from_json(rubric.to_json());
        CHECK(back.to_json() == rubric.to_json());
    }
}

TEST_CASE("citation reward branches") {
    CHECK(report::citation_reward(8, 7, 10) == doctest::Approx(0.1));
    CHECK(report::citation_reward(8, 4, 10) == doctest::Approx(-0.1));
    CHECK(report::citation_reward(5, 5, 10) == doctest::Approx(-1.0));
    // Degenerate reference: the 0.7 gates are trivially met.
    CHECK(report::citation_reward(0, 0, 0) == doctest::Approx(0.1));
    CHECK_THROWS_AS(report::citation_reward(3, 4, 10), Error);
    CHECK_THROWS_AS(report::citation_reward(-1, 0, 0), Error);

    SUBCASE("exhaustive grid against a branch-literal oracle") {
        auto oracle = [](int n_gen, int n_valid, int n_ref) {
            if (n_gen >= 0.7 * n_ref && n_valid >= 0.7 * n_ref) return 0.1;
            if (n_gen >= 0.7 * n_ref && n_valid < 0.7 * n_ref) return -0.1;
            return -1.0;
        };
        for (int n_ref = 0; n_ref <= 10; ++n_ref)
            for (int n_gen = 0; n_gen <= 12; ++n_gen)
                for (int n_valid = 0; n_valid <= n_gen; ++n_valid)
                    CHECK(report::citation_reward(n_gen, n_valid, n_ref) ==
                          oracle(n_gen, n_valid, n_ref));
    }
}

TEST_CASE("citation validity via token Jaccard") {
    Citation c;
    c.description = "the harbor tripled its capacity";
    CHECK(report::citation_validity(c, "the harbor tripled its capacity", 0.3));
    CHECK(report::citation_relevance(c, c.description) == doctest::Approx(1.0));

    Citation disjoint;
    disjoint.description = "alpha beta";
    CHECK(report::citation_relevance(disjoint, "gamma delta") == 0.0);
    CHECK_FALSE(report::citation_validity(disjoint, "gamma delta", 0.3));

    Citation half;
    half.description = "alpha beta";
    // Jaccard({alpha,beta},{alpha,gamma}) = 1/3 > 0.3.
    CHECK(report::citation_relevance(half, "alpha gamma") == doctest::Approx(1.0 / 3));
    CHECK(report::citation_validity(half, "alpha gamma", 0.3));
    CHECK_THROWS_AS(report::citation_validity(half, "alpha gamma", 0.0), Error);
}

TEST_CASE("report extraction and format reward") {
    SUBCASE("a clean report has no violations") {
        Report r = Report::parse(kCleanReport);
        CHECK(r.final_answer_tag);
        CHECK(r.final_answer_text == "The harbor tripled its capacity.");
        CHECK(r.list_numbering_ok);
        REQUIRE(r.tables.size() == 1);
        CHECK(r.tables[0].consistent());
        CHECK(r.headings.size() == 2);
        int resolved = 0;
        for (const Citation& c : r.citations)
            if (c.resolved) ++resolved;
        CHECK(resolved == 2);
        CHECK(report::format_reward_report(r) == 0.0);
    }

    SUBCASE("missing final answer tag costs exactly one point") {
        std::string body = kCleanReport;
        body.erase(body.find("<final_answer>"), std::string("<final_answer>").size());
        Report r = Report::parse(body);
        CHECK_FALSE(r.final_answer_tag);
        CHECK(report::format_reward_report(r) == -1.0);
    }

    SUBCASE("all three violation classes stack to -3") {
        std::string body = R"(# Bad

2. starts at two
4. jumps

| a | b |
|---|---|
| only one cell |

Claim without a definition [9].
)";
        Report r = Report::parse(body);
        report::FormatViolations v = report::format_violations(r);
        CHECK(v.tag);
        CHECK(v.md);
        CHECK(v.ref);
        CHECK(report::format_reward_report(r) == -3.0);
    }

    SUBCASE("format reward only takes values in {0,-1,-2,-3}") {
        for (const char* body : {kCleanReport, "# t\n\ncontent [1]\n\n[1]: x\n", "plain text",
                                 "1. a\n3. b\n", "<final_answer>x</final_answer> [2]\n"}) {
            double r = report::format_reward_report(Report::parse(body));
            CHECK((r == 0.0 || r == -1.0 || r == -2.0 || r == -3.0));
        }
    }

    SUBCASE("misnested tags are violations") {
        Report r = Report::parse("</final_answer>text<final_answer>");
        CHECK_FALSE(r.final_answer_tag);
        Report dup = Report::parse("<final_answer>a</final_answer><final_answer>b</final_answer>");
        CHECK_FALSE(dup.final_answer_tag);
    }

    SUBCASE("broken list numbering is a markdown defect") {
        Report r = Report::parse("1. one\n2. two\n4. four\n");
        CHECK_FALSE(r.list_numbering_ok);
        // Separate runs restart legitimately.
        Report runs = Report::parse("1. one\n2. two\n\ntext\n\n1. restart\n2. next\n");
        CHECK(runs.list_numbering_ok);
    }

    SUBCASE("inconsistent table columns are a markdown defect") {
        Report r = Report::parse("| a | b | c |\n|---|---|---|\n| 1 | 2 |\n");
        REQUIRE(r.tables.size() == 1);
        CHECK_FALSE(r.tables[0].consistent());
    }
}

TEST_CASE("report reward composition") {
    CHECK(report::report_reward(0.73, -1.0, -2.0, 0.0, 0.0) == doctest::Approx(0.73));
    // 0.8 + 1*0.1 + 0.1*(-1) = 0.8
    CHECK(report::report_reward(0.8, 0.1, -1.0, 1.0, 0.1) == doctest::Approx(0.8));
    // Raising lambda_f with violations present strictly decreases the reward.
    double last = report::report_reward(0.8, 0.1, -2.0, 0.5, 0.0);
    for (double lf : {0.1, 0.2, 0.4}) {
        double now = report::report_reward(0.8, 0.1, -2.0, 0.5, lf);
        CHECK(now < last);
        last = now;
    }
    CHECK_THROWS_AS(report::report_reward(0.5, 0.0, 0.0, -0.1, 0.0), Error);
}

TEST_CASE("temporal stage one flags past predictions only") {
    report::Date now = report::Date::parse("2026-06-30");

    SUBCASE("past prediction is flagged") {
        auto c = report::detect_temporal_stage1(
            "By 2025, the market will reach tens of billions.", now);
        REQUIRE(c.size() == 1);
        CHECK(c[0].keyword == "will");
        CHECK(c[0].predicted.year == 2025);
    }

    SUBCASE("future prediction is consistent") {
        CHECK(report::detect_temporal_stage1(
                  "The market is expected to reach hundreds of billions by 2027.", now)
                  .empty());
    }

    SUBCASE("past date without predictive phrasing is history") {
        CHECK(report::detect_temporal_stage1("The market reached ten billion in 2024.", now)
                  .empty());
    }

    SUBCASE("quarter granularity compares within the year") {
        CHECK(report::detect_temporal_stage1("Output will recover by 2026Q1.", now).size() == 1);
        CHECK(report::detect_temporal_stage1("Output will recover by 2026Q3.", now).empty());
    }

    SUBCASE("word boundaries protect lookalikes") {
        CHECK(report::detect_temporal_stage1("Goodwill impairments totaled 2 billion in 2024.",
                                             now)
                  .empty());
    }
}

TEST_CASE("attribution verification over the context window") {
    report::Date now = report::Date::parse("2026-06-30");
    report::RuleAttribution backend;

    SUBCASE("explicit attribution clears the candidate") {
        const std::string text =
            "According to XX organization in 2024, the market is expected to reach tens of "
            "billions by 2025.";
        auto candidates = report::detect_temporal_stage1(text, now);
        REQUIRE(candidates.size() == 1);
        report::TemporalFinding f = report::verify_attribution(candidates[0], text, backend);
        CHECK(f.attribution_found);
        CHECK_FALSE(f.is_error);
    }

    SUBCASE("no attribution in the window is an error") {
        const std::string text = "By 2025, the market will reach tens of billions.";
        auto candidates = report::detect_temporal_stage1(text, now);
        REQUIRE(candidates.size() == 1);
        report::TemporalFinding f = report::verify_attribution(candidates[0], text, backend);
        CHECK_FALSE(f.attribution_found);
        CHECK(f.is_error);
    }

    SUBCASE("the company's own plans count as attribution") {
        const std::string text = "The company expects shipments will pass 1 million by 2024.";
        auto findings = report::detect_temporal(text, now, backend);
        REQUIRE(findings.size() == 1);
        CHECK(findings[0].attribution_found);
    }

    SUBCASE("neighboring sentences supply the attribution") {
        const std::string text =
            "Capacity is expected to double by 2024. That claim drew scrutiny. According to "
            "the audit office, the basis was unclear.";
        auto findings = report::detect_temporal(text, now, backend);
        REQUIRE(findings.size() == 1);
        CHECK_FALSE(findings[0].is_error);
    }

    SUBCASE("an unavailable backend leaves findings unresolved") {
        struct Unavailable final : report::AttributionBackend {
            std::optional<bool> attribution_present(const std::string&,
                                                    const std::string&) override {
                return std::nullopt;
            }
        } dead;
        const std::string text = "By 2025, the market will reach tens of billions.";
        auto findings = report::detect_temporal(text, now, dead);
        REQUIRE(findings.size() == 1);
        CHECK_FALSE(findings[0].resolved);
        CHECK_FALSE(findings[0].is_error);
    }
}

TEST_CASE("bundled temporal fixture is classified perfectly") {
    report::RuleAttribution backend;
    int cases = 0;
    for (const fixtures::TemporalCase& c : fixtures::temporal_fixture()) {
        ++cases;
        report::Date now = report::Date::parse(c.now);
        auto candidates = report::detect_temporal_stage1(c.text, now);
        CHECK(candidates.empty() == !c.expect_flagged);
        bool any_error = false;
        for (const auto& cand : candidates) {
            report::TemporalFinding f = report::verify_attribution(cand, c.text, backend);
            CHECK(f.resolved);
            if (f.is_error) any_error = true;
        }
        CHECK(any_error == c.expect_error);
    }
    CHECK(cases >= 40);
}

TEST_CASE("date parsing") {
    report::Date d = report::Date::parse("2026-06-30");
    CHECK(d.year == 2026);
    CHECK(d.month == 6);
    CHECK(report::Date::parse("2024").year == 2024);
    CHECK_THROWS_AS(report::Date::parse("junk"), Error);
    CHECK_THROWS_AS(report::Date::parse("2026/06/30"), Error);
}

TEST_CASE("rule criterion scorer recognizes the bundled rubric") {
    RubricSet rubric = fixtures::default_rubric("the harbor capacity question");
    Report clean = Report::parse(kCleanReport);
    kg::QueryInstance instance;
    instance.entity_set = {"harbor"};
    instance.answer = "capacity";
    CriterionScores scores = report::rule_criterion_scores(clean, rubric, &instance);
    double race = report::race_score(scores, rubric);
    CHECK(race > 0.5);
    // Unknown criteria default to a neutral score instead of throwing.
    RubricSet custom = sample_rubric();
    CHECK_NOTHROW(report::race_score(report::rule_criterion_scores(clean, custom, nullptr),
                                     custom));
}
