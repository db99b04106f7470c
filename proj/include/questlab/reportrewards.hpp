#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "questlab/kgforge.hpp"

namespace questlab::report {

using json = nlohmann::json;

inline constexpr std::array<const char*, 4> kDimensions = {
    "comprehensiveness", "insight", "instruction_following", "readability"};

struct Criterion {
    std::string criterion;
    std::string explanation;
    double weight = 1.0;
};

// Rubric file layout: {"Query": ..., "dimension_weight": {...}, "criterions":
// {dimension: [{criterion, explanation, weight}, ...]}}. All four dimensions
// must be present with positive weights.
struct RubricSet {
    std::string query;
    std::map<std::string, double> dimension_weight;
    std::map<std::string, std::vector<Criterion>> criterions;

    void validate() const;
    json to_json() const;
    static RubricSet from_json(const json& j);
    static RubricSet from_file(const std::string& path);
};

// Per-criterion scores on the 0-10 scale, keyed by (dimension, criterion text).
class CriterionScores {
public:
    void set(const std::string& dimension, const std::string& criterion, double score);
    std::optional<double> get(const std::string& dimension, const std::string& criterion) const;
    std::size_t size() const { return scores_.size(); }

private:
    std::map<std::pair<std::string, std::string>, double> scores_;
};

// Weighted rubric aggregate in [0,1]: criterion-weighted dimension means scaled
// from the 0-10 scale, then dimension-weight-normalized.
double race_score(const CriterionScores& scores, const RubricSet& rubric);

struct Citation {
    std::string marker;       // "3" for [3]
    std::string target;       // definition target, empty when dangling
    std::string description;  // claim text preceding the marker
    bool resolved = false;    // a definition exists
    bool well_formed = true;
};

struct MarkdownTable {
    std::size_t start_line = 0;
    std::vector<int> row_widths;

    bool consistent() const;
};

// Pure structural extraction from a markdown body: headings, ordered-list
// numbering continuity, tables, inline citations ([n] markers with [n]: target
// definition lines), and the <final_answer> tag.
struct Report {
    std::string body;
    std::vector<std::pair<int, std::string>> headings;  // (level, text)
    std::vector<Citation> citations;
    std::vector<MarkdownTable> tables;
    bool list_numbering_ok = true;
    bool final_answer_tag = false;  // present exactly once and properly nested
    std::string final_answer_text;

    static Report parse(std::string body);
};

// +0.1 / -0.1 / -1 citation-count reward against the reference count. The
// degenerate n_ref = 0 case returns +0.1 (both 0.7*n_ref gates pass trivially).
double citation_reward(int n_gen, int n_valid, int n_ref);

// Token-Jaccard relevance between the citation description and the cited
// passage; valid iff relevance > tau.
bool citation_validity(const Citation& citation, std::string_view source_text, double tau);
double citation_relevance(const Citation& citation, std::string_view source_text);

struct FormatViolations {
    bool tag = false;  // final answer tag missing or misnested
    bool md = false;   // broken list numbering or inconsistent table columns
    bool ref = false;  // malformed or dangling citation

    int count() const { return (tag ? 1 : 0) + (md ? 1 : 0) + (ref ? 1 : 0); }
};

FormatViolations format_violations(const Report& report);

// R_format = -(v_tag + v_md + v_ref), always in {0, -1, -2, -3}.
double format_reward_report(const Report& report);

// R = R_RACE + lambda_c * R_cite + lambda_f * R_format.
double report_reward(double race, double cite, double fmt, double lambda_c, double lambda_f);

// ---------------------------------------------------------------------------
// Temporal tense errors

struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    static Date parse(const std::string& iso);  // YYYY-MM-DD or YYYY
};

struct TimePoint {
    int year = 0;
    int quarter = 0;  // 0 = year granularity

    // Strictly earlier than `now` at the available granularity.
    bool before(const Date& now) const;
};

struct TemporalCandidate {
    std::size_t sentence_index = 0;
    std::string sentence;
    std::string keyword;   // predictive expression that matched
    TimePoint predicted;   // latest time point in the sentence
};

std::vector<std::string> default_predictive_lexicon();

std::vector<std::string> split_sentences(std::string_view text);

// Stage 1: sentences where a predictive keyword co-occurs with a parseable time
// point that is already in the past.
std::vector<TemporalCandidate> detect_temporal_stage1(
    std::string_view text, const Date& now,
    const std::vector<std::string>& lexicon = default_predictive_lexicon());

struct TemporalFinding {
    TemporalCandidate candidate;
    bool attribution_found = false;
    bool resolved = true;  // false when the verification backend was unavailable
    bool is_error = false; // flagged and no attribution in the context window
};

class AttributionBackend {
public:
    virtual ~AttributionBackend() = default;
    // Whether the context names the forecasting source; nullopt when the
    // backend cannot answer (the finding is then left unresolved).
    virtual std::optional<bool> attribution_present(const std::string& context,
                                                    const std::string& matched_sentence) = 0;
};

struct AttributionLexicon {
    std::vector<std::string> phrases;    // "according to", "the company expects", ...
    std::vector<std::string> org_words;  // institute, organization, ...

    static AttributionLexicon defaults();
};

class RuleAttribution final : public AttributionBackend {
public:
    explicit RuleAttribution(AttributionLexicon lexicon = AttributionLexicon::defaults());
    std::optional<bool> attribution_present(const std::string& context,
                                            const std::string& matched_sentence) override;

private:
    AttributionLexicon lexicon_;
};

// Stage 2: checks the candidate's context window (sentence +/- 2) for an
// explicit forecasting source; error iff none is found.
TemporalFinding verify_attribution(const TemporalCandidate& candidate, std::string_view full_text,
                                   AttributionBackend& backend);

// Both stages over a whole document.
std::vector<TemporalFinding> detect_temporal(std::string_view text, const Date& now,
                                             AttributionBackend& backend);

// ---------------------------------------------------------------------------
// Deterministic rubric scorer (rule backend for the judge role)

// Scores the bundled rubric criteria mechanically from report structure and,
// when given, the instance's key entities/answer. Unrecognized criteria score a
// neutral 5 so user rubrics stay usable.
CriterionScores rule_criterion_scores(const Report& report, const RubricSet& rubric,
                                      const kg::QueryInstance* instance);

}  // namespace questlab::report
