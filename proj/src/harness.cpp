#include "questlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "questlab/alignment.hpp"
#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/jsonl.hpp"
#include "questlab/orchestrator.hpp"
#include "questlab/text.hpp"

namespace questlab::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config document

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

ConfigValue parse_value(const std::string& raw, int line_no) {
    ConfigValue v;
    if (raw.empty()) raise("config-invalid", "empty value at line " + std::to_string(line_no));
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            raise("config-invalid", "unterminated string at line " + std::to_string(line_no));
        v.kind = ConfigValue::Kind::string;
        v.str = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = ConfigValue::Kind::boolean;
        v.boolean = raw == "true";
        return v;
    }
    if (raw.front() == '[') {
        if (raw.back() != ']')
            raise("config-invalid", "unterminated array at line " + std::to_string(line_no));
        v.kind = ConfigValue::Kind::list;
        std::string inner = raw.substr(1, raw.size() - 2);
        std::string cur;
        bool in_string = false;
        for (char c : inner) {
            if (c == '"') {
                in_string = !in_string;
                continue;
            }
            if (c == ',' && !in_string) {
                cur = trim(cur);
                if (!cur.empty()) v.list.push_back(cur);
                cur.clear();
                continue;
            }
            if (in_string) cur.push_back(c);
        }
        cur = trim(cur);
        if (!cur.empty()) v.list.push_back(cur);
        return v;
    }
    try {
        std::size_t used = 0;
        v.num = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        v.kind = ConfigValue::Kind::number;
        return v;
    } catch (const std::exception&) {
        raise("config-invalid",
              "cannot parse value '" + raw + "' at line " + std::to_string(line_no));
    }
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text) {
    ConfigDoc doc;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                raise("config-invalid", "bad section header at line " + std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                raise("config-invalid", "empty section name at line " + std::to_string(line_no));
            doc.sections_[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            raise("config-invalid", "expected key = value at line " + std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        if (key.empty() || section.empty())
            raise("config-invalid", "key outside a section at line " + std::to_string(line_no));
        doc.sections_[section][key] = parse_value(trim(line.substr(eq + 1)), line_no);
    }
    return doc;
}

ConfigDoc ConfigDoc::from_file(const std::string& path) {
    return parse(jsonl::read_text_file(path));
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigDoc::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
    if (!has(section, key)) return fallback;
    const ConfigValue& v = sections_.at(section).at(key);
    require(v.kind == ConfigValue::Kind::string, "config-invalid",
            section + "." + key + " must be a string");
    return v.str;
}

double ConfigDoc::get_number(const std::string& section, const std::string& key,
                             double fallback) const {
    if (!has(section, key)) return fallback;
    const ConfigValue& v = sections_.at(section).at(key);
    require(v.kind == ConfigValue::Kind::number, "config-invalid",
            section + "." + key + " must be a number");
    return v.num;
}

bool ConfigDoc::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
    if (!has(section, key)) return fallback;
    const ConfigValue& v = sections_.at(section).at(key);
    require(v.kind == ConfigValue::Kind::boolean, "config-invalid",
            section + "." + key + " must be true or false");
    return v.boolean;
}

std::vector<std::string> ConfigDoc::get_list(const std::string& section, const std::string& key,
                                             const std::vector<std::string>& fallback) const {
    if (!has(section, key)) return fallback;
    const ConfigValue& v = sections_.at(section).at(key);
    require(v.kind == ConfigValue::Kind::list, "config-invalid",
            section + "." + key + " must be an array of strings");
    return v.list;
}

namespace {

const std::map<std::string, std::set<std::string>>& known_schema() {
    static const std::map<std::string, std::set<std::string>> schema = {
        {"paths", {"graph", "templates", "rules", "policy"}},
        {"run", {"stages"}},
        {"synth", {"hops", "count", "holdout", "seed", "obfuscate"}},
        {"rollout", {"seed", "max_steps", "max_context_units"}},
        {"tools", {"max_retries", "cache_capacity", "failure_injection_rate", "rate_limit"}},
        {"rewards",
         {"theta_tool", "theta_format", "theta_prm", "tool_floor", "format_floor", "gamma"}},
        {"train",
         {"objective", "group_size", "batch_instances", "steps", "learning_rate", "beta",
          "epsilon", "epsilon_low", "epsilon_high", "eval_interval", "seed"}},
        {"align",
         {"k", "inputs", "tau_hi_pct", "tau_lo_pct", "beta", "learning_rate", "dpo_steps",
          "self_sft_steps", "seed", "w_judge", "temporal_penalty"}},
        {"research", {"query", "backend", "parallelism", "seed"}},
        {"eval", {"now"}},
    };
    return schema;
}

}  // namespace

RunConfig RunConfig::from_doc(const ConfigDoc& doc) {
    // Schema check first: unknown sections or keys are configuration mistakes.
    for (const auto& [section, keys] : doc.sections()) {
        auto it = known_schema().find(section);
        require(it != known_schema().end(), "config-invalid", "unknown section [" + section + "]");
        for (const auto& [key, value] : keys) {
            (void)value;
            require(it->second.count(key) > 0, "config-invalid",
                    "unknown key '" + key + "' in [" + section + "]");
        }
    }

    RunConfig c;
    c.graph_path = doc.get_string("paths", "graph", "");
    c.templates_path = doc.get_string("paths", "templates", "");
    c.rules_path = doc.get_string("paths", "rules", "");
    c.policy_path = doc.get_string("paths", "policy", "");

    c.stages = doc.get_list("run", "stages", c.stages);

    c.synth_hops = static_cast<int>(doc.get_number("synth", "hops", c.synth_hops));
    c.synth_count = static_cast<int>(doc.get_number("synth", "count", c.synth_count));
    c.synth_holdout = static_cast<int>(doc.get_number("synth", "holdout", c.synth_holdout));
    c.synth_seed = static_cast<std::uint64_t>(doc.get_number("synth", "seed", 11));
    c.synth_obfuscate = doc.get_bool("synth", "obfuscate", c.synth_obfuscate);

    c.rollout_seed = static_cast<std::uint64_t>(doc.get_number("rollout", "seed", 7));
    c.limits.max_steps =
        static_cast<int>(doc.get_number("rollout", "max_steps", c.limits.max_steps));
    c.limits.max_context_units = static_cast<long>(
        doc.get_number("rollout", "max_context_units", static_cast<double>(c.limits.max_context_units)));

    c.tools.max_retries =
        static_cast<int>(doc.get_number("tools", "max_retries", c.tools.max_retries));
    c.tools.cache_capacity =
        static_cast<int>(doc.get_number("tools", "cache_capacity", c.tools.cache_capacity));
    c.tools.failure_injection_rate =
        doc.get_number("tools", "failure_injection_rate", c.tools.failure_injection_rate);
    c.tools.rate_limit =
        static_cast<int>(doc.get_number("tools", "rate_limit", c.tools.rate_limit));

    c.thresholds.tool = doc.get_number("rewards", "theta_tool", c.thresholds.tool);
    c.thresholds.format = doc.get_number("rewards", "theta_format", c.thresholds.format);
    c.thresholds.prm = doc.get_number("rewards", "theta_prm", c.thresholds.prm);
    c.thresholds.tool_floor = doc.get_number("rewards", "tool_floor", c.thresholds.tool_floor);
    c.thresholds.format_floor =
        doc.get_number("rewards", "format_floor", c.thresholds.format_floor);
    c.data_gamma = doc.get_number("rewards", "gamma", c.data_gamma);

    c.train.objective = doc.get_string("train", "objective", c.train.objective);
    c.train.group_size = static_cast<int>(doc.get_number("train", "group_size", c.train.group_size));
    c.train.batch_instances =
        static_cast<int>(doc.get_number("train", "batch_instances", c.train.batch_instances));
    c.train.steps = static_cast<int>(doc.get_number("train", "steps", c.train.steps));
    c.train.learning_rate = doc.get_number("train", "learning_rate", c.train.learning_rate);
    c.train.beta = doc.get_number("train", "beta", c.train.beta);
    c.train.epsilon = doc.get_number("train", "epsilon", c.train.epsilon);
    c.train.epsilon_low = doc.get_number("train", "epsilon_low", c.train.epsilon_low);
    c.train.epsilon_high = doc.get_number("train", "epsilon_high", c.train.epsilon_high);
    c.train.eval_interval =
        static_cast<int>(doc.get_number("train", "eval_interval", c.train.eval_interval));
    c.train.seed = static_cast<std::uint64_t>(doc.get_number("train", "seed", 3));
    c.train.tools = c.tools;
    c.train.limits = c.limits;
    c.train.thresholds = c.thresholds;
    c.train.data_gamma = c.data_gamma;

    c.align_k = static_cast<int>(doc.get_number("align", "k", c.align_k));
    c.align_inputs = static_cast<int>(doc.get_number("align", "inputs", c.align_inputs));
    c.align_tau_hi_pct = doc.get_number("align", "tau_hi_pct", c.align_tau_hi_pct);
    c.align_tau_lo_pct = doc.get_number("align", "tau_lo_pct", c.align_tau_lo_pct);
    c.align_beta = doc.get_number("align", "beta", c.align_beta);
    c.align_learning_rate = doc.get_number("align", "learning_rate", c.align_learning_rate);
    c.align_dpo_steps = static_cast<int>(doc.get_number("align", "dpo_steps", c.align_dpo_steps));
    c.align_self_sft_steps =
        static_cast<int>(doc.get_number("align", "self_sft_steps", c.align_self_sft_steps));
    c.align_seed = static_cast<std::uint64_t>(doc.get_number("align", "seed", 5));
    c.align_w_judge = doc.get_number("align", "w_judge", c.align_w_judge);
    c.align_temporal_penalty =
        doc.get_number("align", "temporal_penalty", c.align_temporal_penalty);

    c.research_query = doc.get_string("research", "query", c.research_query);
    c.research_backend = doc.get_string("research", "backend", c.research_backend);
    c.research_parallelism =
        static_cast<int>(doc.get_number("research", "parallelism", c.research_parallelism));
    c.research_seed = static_cast<std::uint64_t>(doc.get_number("research", "seed", 9));

    c.eval_now = doc.get_string("eval", "now", c.eval_now);

    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_doc(ConfigDoc::from_file(path));
}

void RunConfig::validate() const {
    static const std::set<std::string> known_stages = {"synth",  "rollout",  "train",
                                                       "align",  "research", "eval"};
    require(!stages.empty(), "config-invalid", "run.stages must not be empty");
    for (const std::string& s : stages)
        require(known_stages.count(s) > 0, "config-invalid", "unknown stage '" + s + "'");

    require(synth_hops >= 1 && synth_hops <= 5, "config-invalid", "synth.hops must be in [1,5]");
    require(synth_count >= 1, "config-invalid", "synth.count must be >= 1");
    require(synth_holdout >= 0, "config-invalid", "synth.holdout must be >= 0");
    tools.validate();
    require(limits.max_steps >= 1, "config-invalid", "rollout.max_steps must be >= 1");
    require(limits.max_context_units >= 1, "config-invalid",
            "rollout.max_context_units must be >= 1");
    for (double t : {thresholds.tool, thresholds.format, thresholds.prm})
        require(t >= 0.0 && t <= 1.0, "config-invalid", "reward thresholds must be in [0,1]");
    require(thresholds.tool_floor >= 0 && thresholds.format_floor >= 0, "config-invalid",
            "coefficient floors must be >= 0");
    require(data_gamma > 0 && data_gamma < 1, "config-invalid", "rewards.gamma must be in (0,1)");
    train.validate();
    require(align_k >= 2, "config-invalid", "align.k must be >= 2");
    require(align_inputs >= 1, "config-invalid", "align.inputs must be >= 1");
    require(align_tau_lo_pct <= align_tau_hi_pct, "config-invalid",
            "align.tau_lo_pct must be <= align.tau_hi_pct");
    require(align_tau_hi_pct >= 0 && align_tau_hi_pct <= 1 && align_tau_lo_pct >= 0 &&
                align_tau_lo_pct <= 1,
            "config-invalid", "align percentiles must be in [0,1]");
    require(align_beta > 0, "config-invalid", "align.beta must be positive");
    require(align_learning_rate > 0, "config-invalid", "align.learning_rate must be positive");
    require(research_parallelism >= 1, "config-invalid", "research.parallelism must be >= 1");
    report::Date::parse(eval_now);  // raises on malformed dates

    for (const std::string& s : stages) {
        if (s == "research")
            require(!research_query.empty(), "config-invalid",
                    "research stage needs research.query");
        if (s == "synth" || s == "rollout" || s == "train" || s == "align")
            require(!graph_path.empty(), "config-invalid", "paths.graph is required");
    }
}

// ---------------------------------------------------------------------------
// Module evaluation

std::string normalize_heading(const std::string& heading) {
    // Strip numbering prefixes like "2.", "3.1", "4)" before folding.
    std::size_t i = 0;
    while (i < heading.size() &&
           (std::isdigit(static_cast<unsigned char>(heading[i])) || heading[i] == '.' ||
            heading[i] == ')' || heading[i] == ' '))
        ++i;
    return text::normalize(heading.substr(i));
}

json MetricsReport::to_json() const {
    json usage = json::object();
    for (const auto& [tool, share] : tool_usage) usage[tool] = share;
    return {{"reasoning",
             {{"reflection_turns", reflection_turns_mean},
              {"query_repetition_rate", query_repetition_rate}}},
            {"tool", {{"usage_proportion", usage}, {"failure_rate", tool_failure_rate}}},
            {"outline",
             {{"title_miss_rate", outline_title_miss_rate},
              {"hierarchy_error_count", hierarchy_error_count}}},
            {"report",
             {{"tense_error_rate", tense_error_rate}, {"valid_table_rate", valid_table_rate}}}};
}

MetricsReport module_eval(const std::vector<env::Trajectory>& traces,
                          const std::vector<ReportInput>& reports, const report::Date& now) {
    require(!traces.empty() || !reports.empty(), "empty-input",
            "module evaluation needs traces or reports");
    MetricsReport m;

    // Reasoning and tool metrics over trajectories.
    std::size_t reflect_total = 0;
    std::size_t search_calls = 0;
    std::set<std::string> distinct_search_args;
    std::map<std::string, std::size_t> usage;
    std::size_t retrieval_calls = 0, failed_calls = 0;
    for (const env::Trajectory& t : traces) {
        for (const env::Step& s : t.steps) {
            if (s.action.tool == env::Tool::reflect && s.format_valid) ++reflect_total;
            if (env::is_retrieval(s.action.tool)) {
                ++retrieval_calls;
                usage[env::to_string(s.action.tool)] += 1;
                if (!s.observation.ok()) ++failed_calls;
                if (s.action.tool != env::Tool::crawl) {
                    ++search_calls;
                    distinct_search_args.insert(text::normalize(s.action.argument));
                }
            }
        }
    }
    m.reflection_turns_mean =
        traces.empty() ? 0.0
                       : static_cast<double>(reflect_total) / static_cast<double>(traces.size());
    m.query_repetition_rate =
        search_calls == 0 ? 0.0
                          : 1.0 - static_cast<double>(distinct_search_args.size()) /
                                      static_cast<double>(search_calls);
    if (retrieval_calls > 0) {
        for (const auto& [tool, count] : usage)
            m.tool_usage[tool] =
                static_cast<double>(count) / static_cast<double>(retrieval_calls);
        m.tool_failure_rate =
            static_cast<double>(failed_calls) / static_cast<double>(retrieval_calls);
    }

    // Outline and report metrics.
    std::size_t outline_headings = 0, missed = 0;
    std::size_t tables_total = 0, tables_valid = 0;
    std::size_t reports_with_tense_errors = 0;
    report::RuleAttribution attribution;
    for (const ReportInput& input : reports) {
        const report::Report parsed = report::Report::parse(input.body);

        if (input.outline) {
            std::set<std::string> present;
            for (const auto& [level, title] : parsed.headings) {
                (void)level;
                present.insert(normalize_heading(title));
            }
            for (const auto& [level, title] : *input.outline) {
                (void)level;
                ++outline_headings;
                if (!present.count(normalize_heading(title))) ++missed;
            }
        }
        for (std::size_t h = 1; h < parsed.headings.size(); ++h)
            if (parsed.headings[h].first - parsed.headings[h - 1].first > 1)
                ++m.hierarchy_error_count;

        for (const report::MarkdownTable& t : parsed.tables) {
            ++tables_total;
            if (t.consistent()) ++tables_valid;
        }

        bool has_error = false;
        for (const report::TemporalFinding& f :
             report::detect_temporal(input.body, now, attribution))
            if (f.resolved && f.is_error) has_error = true;
        if (has_error) ++reports_with_tense_errors;
    }
    m.outline_title_miss_rate =
        outline_headings == 0
            ? 0.0
            : static_cast<double>(missed) / static_cast<double>(outline_headings);
    m.valid_table_rate = tables_total == 0 ? 1.0
                                           : static_cast<double>(tables_valid) /
                                                 static_cast<double>(tables_total);
    m.tense_error_rate = reports.empty() ? 0.0
                                         : static_cast<double>(reports_with_tense_errors) /
                                               static_cast<double>(reports.size());
    return m;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

kg::TemplateBank bank_for(const RunConfig& config, const kg::KnowledgeGraph& graph) {
    if (!config.templates_path.empty())
        return kg::TemplateBank::from_json(json::parse(jsonl::read_text_file(config.templates_path)));
    // Auto bank: one canonical phrase per relation label in the graph.
    kg::TemplateBank bank = kg::TemplateBank::defaults();
    for (const kg::Edge& e : graph.edges())
        if (!bank.relations.count(e.relation))
            bank.relations[e.relation] = {kg::relation_phrase(e.relation)};
    return bank;
}

std::string file_hash(const std::string& path) {
    return text::fnv1a_hex(jsonl::read_text_file(path));
}

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = pct * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace

void run_pipeline(const RunConfig& config, const std::string& out_dir) {
    config.validate();
    fs::create_directories(out_dir);
    auto path_of = [&](const std::string& name) { return out_dir + "/" + name; };

    std::vector<std::string> artifacts;
    std::string current_stage;
    try {
        std::optional<kg::KnowledgeGraph> graph;
        if (!config.graph_path.empty()) graph = kg::KnowledgeGraph::from_file(config.graph_path);

        std::vector<kg::QueryInstance> instances, holdout;
        policy::PolicyParams params =
            config.policy_path.empty()
                ? policy::PolicyParams::zeros(env::kFeatureCount,
                                              policy::demo_vocabulary(config.synth_hops))
                : policy::PolicyParams::load(config.policy_path);

        for (const std::string& stage : config.stages) {
            current_stage = stage;
            if (stage == "synth") {
                require(graph.has_value(), "config-invalid", "synth needs paths.graph");
                kg::TemplateBank bank = bank_for(config, *graph);
                kg::SynthOptions options;
                options.hops = config.synth_hops;
                options.count = config.synth_count + config.synth_holdout;
                options.seed = config.synth_seed;
                options.apply_obfuscation = config.synth_obfuscate;
                if (!config.rules_path.empty())
                    options.rules = kg::ObfuscationRule::from_json(
                        json::parse(jsonl::read_text_file(config.rules_path)));
                else if (options.apply_obfuscation)
                    options.rules = fixtures::demo_obfuscation_rules();
                std::vector<kg::QueryInstance> all = kg::synthesize(*graph, bank, options);
                holdout.assign(all.end() - config.synth_holdout, all.end());
                all.resize(all.size() - static_cast<std::size_t>(config.synth_holdout));
                instances = std::move(all);

                std::vector<json> rows;
                for (const kg::QueryInstance& q : instances) rows.push_back(q.to_json());
                jsonl::write_file(path_of("instances.jsonl"), rows);
                artifacts.push_back("instances.jsonl");
                rows.clear();
                for (const kg::QueryInstance& q : holdout) rows.push_back(q.to_json());
                jsonl::write_file(path_of("holdout.jsonl"), rows);
                artifacts.push_back("holdout.jsonl");
            } else if (stage == "rollout") {
                require(graph.has_value(), "config-invalid", "rollout needs paths.graph");
                require(!instances.empty(), "config-invalid",
                        "rollout needs a preceding synth stage");
                env::Corpus corpus(*graph);
                rewards::ExactMatchJudge judge;
                std::vector<json> rows;
                for (std::size_t i = 0; i < instances.size(); ++i) {
                    env::Trajectory t =
                        env::rollout(params, instances[i], corpus, config.tools, config.limits,
                                     Rng::mix(config.rollout_seed, i));
                    json record = t.to_json();
                    record["reward"] = rewards::score_trajectory(
                                           t, instances[i], judge,
                                           rewards::CoefficientVector::initial())
                                           .to_json();
                    rows.push_back(std::move(record));
                }
                jsonl::write_file(path_of("traces.jsonl"), rows);
                artifacts.push_back("traces.jsonl");
            } else if (stage == "train") {
                require(graph.has_value() && !instances.empty(), "config-invalid",
                        "train needs graph and instances");
                policy::TrainConfig tc = config.train;
                policy::TrainResult result = policy::train(params, *graph, instances,
                                                           holdout.empty() ? instances : holdout,
                                                           tc);
                params = result.params;
                params.save(path_of("policy.json"));
                jsonl::write_text_file(path_of("metrics.csv"), result.metrics_csv());
                jsonl::write_text_file(path_of("schedule.csv"), result.schedule_csv());
                jsonl::write_text_file(
                    path_of("train_summary.json"),
                    json{{"validation_orm", result.validation_orm},
                         {"phase", rewards::to_string(result.schedule.phase)},
                         {"transitions", result.schedule.history.size()}}
                            .dump(2) +
                        "\n");
                artifacts.insert(artifacts.end(),
                                 {"policy.json", "metrics.csv", "schedule.csv",
                                  "train_summary.json"});
            } else if (stage == "align") {
                require(graph.has_value() && !instances.empty(), "config-invalid",
                        "align needs graph and instances");
                env::Corpus corpus(*graph);
                std::vector<kg::QueryInstance> inputs(
                    instances.begin(),
                    instances.begin() + std::min<std::size_t>(instances.size(),
                                                              static_cast<std::size_t>(
                                                                  config.align_inputs)));
                align::QualityWeights weights;
                weights.w_judge = config.align_w_judge;
                weights.temporal_penalty = config.align_temporal_penalty;
                weights.now_date = config.eval_now;

                std::vector<align::Sample> samples =
                    align::self_sample(params, inputs, config.align_k, corpus, config.tools,
                                       config.limits, config.align_seed);
                std::map<std::string, const kg::QueryInstance*> by_id;
                for (const kg::QueryInstance& q : inputs) by_id[q.id] = &q;

                std::vector<align::ScoredSample> scored;
                std::vector<json> sample_rows;
                for (const align::Sample& s : samples) {
                    const kg::QueryInstance& instance = *by_id.at(s.input_id);
                    align::QualityScore score = align::quality_score(
                        s, instance, fixtures::default_rubric(instance.query_text), weights);
                    json row = s.to_json();
                    row["quality"] = score.to_json();
                    sample_rows.push_back(std::move(row));
                    scored.push_back({s, score});
                }
                jsonl::write_file(path_of("align_samples.jsonl"), sample_rows);
                artifacts.push_back("align_samples.jsonl");

                // Per-input percentile thresholds.
                std::vector<align::ScoredSample> dplus, dminus;
                for (const auto& [id, instance] : by_id) {
                    (void)instance;
                    std::vector<align::ScoredSample> mine;
                    std::vector<double> values;
                    for (const align::ScoredSample& s : scored)
                        if (s.sample.input_id == id) {
                            mine.push_back(s);
                            values.push_back(s.score.combined);
                        }
                    auto [hi, lo] = align::partition(mine,
                                                     percentile(values, config.align_tau_hi_pct),
                                                     percentile(values, config.align_tau_lo_pct));
                    dplus.insert(dplus.end(), hi.begin(), hi.end());
                    dminus.insert(dminus.end(), lo.begin(), lo.end());
                }
                std::vector<align::PreferencePair> pairs = align::build_pairs(dplus, dminus);

                policy::PolicyParams ref = params;  // alignment-stage snapshot
                for (int i = 0; i < config.align_dpo_steps && !pairs.empty(); ++i) {
                    policy::LossReport loss = align::dpo_loss(params, ref, pairs, config.align_beta);
                    for (std::size_t w = 0; w < params.weights.size(); ++w)
                        params.weights[w] -= config.align_learning_rate * loss.gradient[w];
                }
                std::vector<policy::PolicyTrajectory> dplus_trajs;
                for (const align::ScoredSample& s : dplus)
                    dplus_trajs.push_back(
                        policy::to_policy_trajectory(s.sample.trajectory, s.score.combined));
                for (int i = 0; i < config.align_self_sft_steps && !dplus_trajs.empty(); ++i) {
                    policy::LossReport loss = align::self_sft_loss(params, dplus_trajs);
                    for (std::size_t w = 0; w < params.weights.size(); ++w)
                        params.weights[w] -= config.align_learning_rate * loss.gradient[w];
                }
                params.save(path_of("policy_aligned.json"));
                jsonl::write_text_file(path_of("align_summary.json"),
                                       json{{"samples", samples.size()},
                                            {"dplus", dplus.size()},
                                            {"dminus", dminus.size()},
                                            {"pairs", pairs.size()}}
                                               .dump(2) +
                                           "\n");
                artifacts.insert(artifacts.end(), {"policy_aligned.json", "align_summary.json"});
            } else if (stage == "research") {
                require(graph.has_value(), "config-invalid", "research needs paths.graph");
                env::Corpus corpus(*graph);
                orch::BackendConfig backend;
                backend.kind = orch::backend_kind_from_string(config.research_backend);
                if (backend.kind == orch::BackendConfig::Kind::surrogate)
                    backend.params = &params;
                orch::ResearchRun run =
                    orch::research(config.research_query, corpus, backend,
                                   config.research_parallelism, config.research_seed,
                                   config.tools, config.limits);
                orch::persist_trace(run, path_of("research_run.jsonl"));
                jsonl::write_text_file(path_of("report.md"), run.report.body);
                artifacts.insert(artifacts.end(), {"research_run.jsonl", "report.md"});
            } else if (stage == "eval") {
                std::vector<env::Trajectory> traces;
                std::vector<ReportInput> reports;
                if (fs::exists(path_of("traces.jsonl")))
                    for (const json& row : jsonl::read_file(path_of("traces.jsonl")))
                        traces.push_back(env::Trajectory::from_json(row));
                if (fs::exists(path_of("research_run.jsonl"))) {
                    orch::ResearchRun run = orch::load_trace(path_of("research_run.jsonl"));
                    for (const env::Trajectory& t : run.trajectories) traces.push_back(t);
                    reports.push_back({run.report.outline, run.report.body});
                }
                MetricsReport metrics =
                    module_eval(traces, reports, report::Date::parse(config.eval_now));
                jsonl::write_text_file(path_of("metrics.json"), metrics.to_json().dump(2) + "\n");
                artifacts.push_back("metrics.json");
            }
        }

        json summary = {{"stages", config.stages}, {"artifacts", json::object()}};
        std::sort(artifacts.begin(), artifacts.end());
        artifacts.erase(std::unique(artifacts.begin(), artifacts.end()), artifacts.end());
        for (const std::string& name : artifacts)
            summary["artifacts"][name] = file_hash(path_of(name));
        jsonl::write_text_file(path_of("summary.json"), summary.dump(2) + "\n");
    } catch (const Error& e) {
        jsonl::write_text_file(path_of("error.json"),
                               json{{"stage", current_stage},
                                    {"code", e.code()},
                                    {"message", e.what()}}
                                       .dump(2) +
                                   "\n");
        throw;
    }
}

}  // namespace questlab::harness
