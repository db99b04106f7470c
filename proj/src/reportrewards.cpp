#include "questlab/reportrewards.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "questlab/errors.hpp"
#include "questlab/jsonl.hpp"
#include "questlab/text.hpp"

namespace questlab::report {

// ---------------------------------------------------------------------------
// Rubrics

void RubricSet::validate() const {
    for (const char* dim : kDimensions) {
        auto wit = dimension_weight.find(dim);
        require(wit != dimension_weight.end(), "parse-error",
                std::string("rubric missing dimension weight '") + dim + "'");
        require(wit->second > 0, "parse-error",
                std::string("dimension weight for '") + dim + "' must be positive");
        auto cit = criterions.find(dim);
        require(cit != criterions.end() && !cit->second.empty(), "parse-error",
                std::string("rubric missing criterions for '") + dim + "'");
        for (const Criterion& c : cit->second)
            require(c.weight > 0, "parse-error",
                    "criterion weight must be positive: " + c.criterion);
    }
}

json RubricSet::to_json() const {
    json dims = json::object();
    for (const auto& [k, v] : dimension_weight) dims[k] = v;
    json crits = json::object();
    for (const auto& [dim, list] : criterions) {
        json arr = json::array();
        for (const Criterion& c : list)
            arr.push_back({{"criterion", c.criterion},
                           {"explanation", c.explanation},
                           {"weight", c.weight}});
        crits[dim] = arr;
    }
    return {{"Query", query}, {"dimension_weight", dims}, {"criterions", crits}};
}

RubricSet RubricSet::from_json(const json& j) {
    RubricSet r;
    r.query = j.value("Query", "");
    for (auto it = j.at("dimension_weight").begin(); it != j.at("dimension_weight").end(); ++it)
        r.dimension_weight[it.key()] = it.value().get<double>();
    for (auto it = j.at("criterions").begin(); it != j.at("criterions").end(); ++it) {
        std::vector<Criterion> list;
        for (const auto& c : it.value())
            list.push_back({c.at("criterion").get<std::string>(), c.value("explanation", ""),
                            c.value("weight", 1.0)});
        r.criterions[it.key()] = std::move(list);
    }
    r.validate();
    return r;
}

RubricSet RubricSet::from_file(const std::string& path) {
    return from_json(json::parse(jsonl::read_text_file(path)));
}

void CriterionScores::set(const std::string& dimension, const std::string& criterion,
                          double score) {
    require(score >= 0.0 && score <= 10.0, "invalid-argument",
            "criterion scores live on the 0-10 scale");
    scores_[{dimension, criterion}] = score;
}

std::optional<double> CriterionScores::get(const std::string& dimension,
                                           const std::string& criterion) const {
    auto it = scores_.find({dimension, criterion});
    if (it == scores_.end()) return std::nullopt;
    return it->second;
}

double race_score(const CriterionScores& scores, const RubricSet& rubric) {
    rubric.validate();
    double weighted = 0.0, weight_total = 0.0;
    for (const auto& [dim, list] : rubric.criterions) {
        double dim_num = 0.0, dim_den = 0.0;
        for (const Criterion& c : list) {
            std::optional<double> s = scores.get(dim, c.criterion);
            if (!s)
                raise("missing-criterion-score",
                      "no score for '" + c.criterion + "' in dimension '" + dim + "'");
            dim_num += c.weight * (*s);
            dim_den += c.weight;
        }
        const double dim_value = (dim_num / dim_den) / 10.0;  // scale to [0,1]
        const double dw = rubric.dimension_weight.at(dim);
        weighted += dw * dim_value;
        weight_total += dw;
    }
    return weighted / weight_total;
}

// ---------------------------------------------------------------------------
// Markdown extraction

bool MarkdownTable::consistent() const {
    for (int w : row_widths)
        if (w != row_widths.front()) return false;
    return !row_widths.empty();
}

namespace {

int table_row_width(const std::string& line) {
    // Cells between the outer pipes; "| a | b |" -> 2.
    std::string trimmed = line;
    auto first = trimmed.find_first_not_of(" \t");
    auto last = trimmed.find_last_not_of(" \t");
    trimmed = trimmed.substr(first, last - first + 1);
    if (trimmed.size() >= 2 && trimmed.front() == '|') trimmed = trimmed.substr(1);
    if (!trimmed.empty() && trimmed.back() == '|') trimmed.pop_back();
    int cells = 1;
    for (char c : trimmed)
        if (c == '|') ++cells;
    return cells;
}

bool is_table_line(const std::string& line) {
    auto pos = line.find_first_not_of(" \t");
    return pos != std::string::npos && line[pos] == '|';
}

}  // namespace

Report Report::parse(std::string body_in) {
    Report r;
    r.body = std::move(body_in);

    std::vector<std::string> lines;
    {
        std::istringstream in(r.body);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }

    // Headings.
    for (const std::string& line : lines) {
        std::size_t level = 0;
        while (level < line.size() && line[level] == '#') ++level;
        if (level >= 1 && level <= 6 && level < line.size() && line[level] == ' ')
            r.headings.emplace_back(static_cast<int>(level), line.substr(level + 1));
    }

    // Tables: maximal runs of '|' lines.
    for (std::size_t i = 0; i < lines.size();) {
        if (!is_table_line(lines[i])) {
            ++i;
            continue;
        }
        MarkdownTable table;
        table.start_line = i + 1;
        while (i < lines.size() && is_table_line(lines[i])) {
            table.row_widths.push_back(table_row_width(lines[i]));
            ++i;
        }
        r.tables.push_back(std::move(table));
    }

    // Ordered-list numbering continuity per contiguous run at one indent.
    {
        static const std::regex item_re(R"(^(\s*)(\d+)\.\s)");
        std::string prev_indent;
        long prev_number = -1;
        bool in_run = false;
        for (const std::string& line : lines) {
            std::smatch m;
            if (std::regex_search(line, m, item_re)) {
                const std::string indent = m[1].str();
                const long number = std::stol(m[2].str());
                if (in_run && indent == prev_indent && number != prev_number + 1)
                    r.list_numbering_ok = false;
                in_run = true;
                prev_indent = indent;
                prev_number = number;
            } else if (!line.empty() && line.find_first_not_of(" \t") != std::string::npos) {
                in_run = false;
            }
        }
    }

    // Final answer tag.
    {
        const std::string open = "<final_answer>", close = "</final_answer>";
        std::size_t opens = 0, closes = 0;
        for (std::size_t p = r.body.find(open); p != std::string::npos;
             p = r.body.find(open, p + 1))
            ++opens;
        for (std::size_t p = r.body.find(close); p != std::string::npos;
             p = r.body.find(close, p + 1))
            ++closes;
        const std::size_t open_at = r.body.find(open);
        const std::size_t close_at = r.body.find(close);
        if (opens == 1 && closes == 1 && open_at < close_at) {
            r.final_answer_tag = true;
            const std::size_t begin = open_at + open.size();
            r.final_answer_text = r.body.substr(begin, close_at - begin);
        }
    }

    // Citations: definitions are "[n]: target" lines, markers are inline [n].
    std::map<std::string, std::string> definitions;
    std::vector<std::size_t> definition_lines;
    {
        static const std::regex def_re(R"(^\[(\d+)\]:\s*(.*)$)");
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::smatch m;
            if (std::regex_match(lines[i], m, def_re)) {
                definitions[m[1].str()] = m[2].str();
                definition_lines.push_back(i);
            }
        }
    }
    {
        static const std::regex marker_re(R"(\[(\d*)\])");
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (std::find(definition_lines.begin(), definition_lines.end(), i) !=
                definition_lines.end())
                continue;
            const std::string& line = lines[i];
            auto begin = std::sregex_iterator(line.begin(), line.end(), marker_re);
            std::size_t last_end = 0;
            for (auto it = begin; it != std::sregex_iterator(); ++it) {
                Citation c;
                c.marker = (*it)[1].str();
                c.description = line.substr(last_end,
                                            static_cast<std::size_t>(it->position()) - last_end);
                last_end = static_cast<std::size_t>(it->position() + it->length());
                c.well_formed = !c.marker.empty();
                if (c.well_formed) {
                    auto def = definitions.find(c.marker);
                    if (def != definitions.end() && !def->second.empty()) {
                        c.resolved = true;
                        c.target = def->second;
                    }
                }
                r.citations.push_back(std::move(c));
            }
        }
    }
    // Definitions with empty targets are malformed citations too.
    for (const auto& [marker, target] : definitions) {
        if (target.empty()) {
            Citation c;
            c.marker = marker;
            c.well_formed = false;
            r.citations.push_back(std::move(c));
        }
    }

    return r;
}

// ---------------------------------------------------------------------------
// Citation and format rewards

double citation_reward(int n_gen, int n_valid, int n_ref) {
    require(n_gen >= 0 && n_valid >= 0 && n_ref >= 0, "invalid-argument",
            "citation counts must be non-negative");
    require(n_valid <= n_gen, "invalid-argument", "n_valid cannot exceed n_gen");
    const double gate = 0.7 * n_ref;
    if (n_gen < gate) return -1.0;
    return n_valid >= gate ? 0.1 : -0.1;
}

double citation_relevance(const Citation& citation, std::string_view source_text) {
    return text::jaccard(text::tokens(citation.description), text::tokens(source_text));
}

bool citation_validity(const Citation& citation, std::string_view source_text, double tau) {
    require(tau > 0.0 && tau < 1.0, "invalid-argument", "tau must be in (0,1)");
    return citation_relevance(citation, source_text) > tau;
}

FormatViolations format_violations(const Report& report) {
    FormatViolations v;
    v.tag = !report.final_answer_tag;
    bool tables_ok = true;
    for (const MarkdownTable& t : report.tables)
        if (!t.consistent()) tables_ok = false;
    v.md = !report.list_numbering_ok || !tables_ok;
    for (const Citation& c : report.citations)
        if (!c.well_formed || !c.resolved) v.ref = true;
    return v;
}

double format_reward_report(const Report& report) {
    const int violations = format_violations(report).count();
    return violations == 0 ? 0.0 : -static_cast<double>(violations);
}

double report_reward(double race, double cite, double fmt, double lambda_c, double lambda_f) {
    require(lambda_c >= 0 && lambda_f >= 0, "invalid-argument",
            "balancing coefficients must be non-negative");
    return race + lambda_c * cite + lambda_f * fmt;
}

// ---------------------------------------------------------------------------
// Temporal tense errors

Date Date::parse(const std::string& iso) {
    static const std::regex full_re(R"(^(\d{4})-(\d{2})-(\d{2})$)");
    static const std::regex year_re(R"(^(\d{4})$)");
    std::smatch m;
    Date d;
    if (std::regex_match(iso, m, full_re)) {
        d.year = std::stoi(m[1].str());
        d.month = std::stoi(m[2].str());
        d.day = std::stoi(m[3].str());
    } else if (std::regex_match(iso, m, year_re)) {
        d.year = std::stoi(m[1].str());
        d.month = 1;
        d.day = 1;
    } else {
        raise("parse-error", "dates are YYYY-MM-DD or YYYY, got '" + iso + "'");
    }
    return d;
}

bool TimePoint::before(const Date& now) const {
    if (quarter == 0) return year < now.year;
    const int now_quarter = now.month == 0 ? 1 : (now.month - 1) / 3 + 1;
    return year < now.year || (year == now.year && quarter < now_quarter);
}

std::vector<std::string> default_predictive_lexicon() {
    return {"is expected to", "are expected to", "will",       "is projected to",
            "are projected to", "is forecast to", "is anticipated to", "expects to"};
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        cur.push_back(c);
        if (c == '.' || c == '!' || c == '?' || c == '\n') {
            if (cur.find_first_not_of(" \t\n") != std::string::npos) out.push_back(cur);
            cur.clear();
        }
    }
    if (cur.find_first_not_of(" \t\n") != std::string::npos) out.push_back(cur);
    return out;
}

namespace {

// Latest parseable time point in a sentence; quarters refine years.
std::optional<TimePoint> latest_time_point(const std::string& sentence) {
    static const std::regex quarter_re(R"(\b((19|20)\d{2})\s?Q([1-4])\b)");
    static const std::regex year_re(R"(\b(19|20)\d{2}\b)");
    std::optional<TimePoint> best;
    auto consider = [&](TimePoint tp) {
        if (!best || tp.year > best->year ||
            (tp.year == best->year && tp.quarter > best->quarter))
            best = tp;
    };
    for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), quarter_re);
         it != std::sregex_iterator(); ++it)
        consider({std::stoi((*it)[1].str()), std::stoi((*it)[3].str())});
    for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), year_re);
         it != std::sregex_iterator(); ++it)
        consider({std::stoi(it->str()), 0});
    return best;
}

// Word-boundary, case-insensitive match over normalized text.
bool contains_keyword(const std::string& norm_sentence, const std::string& keyword) {
    const std::string needle = text::normalize(keyword);
    std::size_t pos = 0;
    auto is_word = [](unsigned char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
    };
    while ((pos = norm_sentence.find(needle, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word(norm_sentence[pos - 1]);
        const std::size_t end = pos + needle.size();
        const bool right_ok = end >= norm_sentence.size() || !is_word(norm_sentence[end]);
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

}  // namespace

std::vector<TemporalCandidate> detect_temporal_stage1(std::string_view text, const Date& now,
                                                      const std::vector<std::string>& lexicon) {
    require(now.year > 0, "invalid-argument", "now date is not well-formed");
    std::vector<TemporalCandidate> out;
    std::vector<std::string> sentences = split_sentences(text);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const std::string norm = text::normalize(sentences[i]);
        std::string matched;
        for (const std::string& kw : lexicon) {
            if (contains_keyword(norm, kw)) {
                matched = kw;
                break;
            }
        }
        if (matched.empty()) continue;
        std::optional<TimePoint> tp = latest_time_point(sentences[i]);
        if (!tp || !tp->before(now)) continue;
        out.push_back({i, sentences[i], matched, *tp});
    }
    return out;
}

AttributionLexicon AttributionLexicon::defaults() {
    AttributionLexicon lex;
    lex.phrases = {"according to", "the company expects", "analysts at", "a research institute",
                   "research firm", "as reported by", "estimates from"};
    lex.org_words = {"institute",   "organization", "organisation", "corporation", "foundation",
                     "bank",        "agency",       "fund",         "consultancy", "ministry",
                     "commission",  "association"};
    return lex;
}

RuleAttribution::RuleAttribution(AttributionLexicon lexicon) : lexicon_(std::move(lexicon)) {}

std::optional<bool> RuleAttribution::attribution_present(const std::string& context,
                                                         const std::string& matched_sentence) {
    (void)matched_sentence;
    const std::string norm = text::normalize(context);
    for (const std::string& phrase : lexicon_.phrases)
        if (contains_keyword(norm, text::normalize(phrase))) return true;
    for (const std::string& word : lexicon_.org_words)
        if (contains_keyword(norm, word)) return true;
    return false;
}

TemporalFinding verify_attribution(const TemporalCandidate& candidate, std::string_view full_text,
                                   AttributionBackend& backend) {
    std::vector<std::string> sentences = split_sentences(full_text);
    std::string context;
    const std::size_t lo = candidate.sentence_index >= 2 ? candidate.sentence_index - 2 : 0;
    const std::size_t hi = std::min(sentences.size(), candidate.sentence_index + 3);
    for (std::size_t i = lo; i < hi && i < sentences.size(); ++i) context += sentences[i];
    if (context.empty()) context = candidate.sentence;

    TemporalFinding finding;
    finding.candidate = candidate;
    std::optional<bool> present = backend.attribution_present(context, candidate.sentence);
    if (!present) {
        finding.resolved = false;
        return finding;
    }
    finding.attribution_found = *present;
    finding.is_error = !*present;
    return finding;
}

std::vector<TemporalFinding> detect_temporal(std::string_view text, const Date& now,
                                             AttributionBackend& backend) {
    std::vector<TemporalFinding> out;
    for (const TemporalCandidate& c : detect_temporal_stage1(text, now))
        out.push_back(verify_attribution(c, text, backend));
    return out;
}

// ---------------------------------------------------------------------------
// Rule-based criterion scorer

CriterionScores rule_criterion_scores(const Report& report, const RubricSet& rubric,
                                      const kg::QueryInstance* instance) {
    CriterionScores scores;
    const std::vector<std::string> body_tokens = text::tokens(report.body);

    for (const auto& [dim, list] : rubric.criterions) {
        for (const Criterion& c : list) {
            double score = 5.0;  // neutral default for unrecognized criteria
            if (c.criterion == "covers the key entities") {
                if (instance && !instance->entity_set.empty()) {
                    std::size_t hits = 0;
                    for (const std::string& name : instance->entity_set)
                        if (text::contains_norm(report.body, name)) ++hits;
                    score = 10.0 * static_cast<double>(hits) /
                            static_cast<double>(instance->entity_set.size());
                } else {
                    score = 0.0;
                }
            } else if (c.criterion == "states a final answer") {
                score = report.final_answer_tag && !report.final_answer_text.empty() ? 10.0 : 0.0;
            } else if (c.criterion == "grounds claims in cited sources") {
                std::size_t resolved = 0;
                for (const Citation& cit : report.citations)
                    if (cit.resolved) ++resolved;
                score = std::min(10.0, 5.0 * static_cast<double>(resolved));
            } else if (c.criterion == "stays on the queried subject") {
                std::vector<std::string> qt = text::tokens(rubric.query);
                std::sort(qt.begin(), qt.end());
                qt.erase(std::unique(qt.begin(), qt.end()), qt.end());
                score = qt.empty() ? 5.0
                                   : 10.0 * static_cast<double>(text::overlap(qt, body_tokens)) /
                                         static_cast<double>(qt.size());
            } else if (c.criterion == "uses a clear hierarchical structure") {
                bool tables_ok = true;
                for (const MarkdownTable& t : report.tables)
                    if (!t.consistent()) tables_ok = false;
                if (report.headings.size() >= 2 && report.list_numbering_ok && tables_ok)
                    score = 10.0;
                else if (!report.headings.empty())
                    score = 5.0;
                else
                    score = 0.0;
            }
            scores.set(dim, c.criterion, score);
        }
    }
    return scores;
}

}  // namespace questlab::report
