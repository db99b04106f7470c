#include "questlab.h"

#include <cstring>
#include <filesystem>
#include <set>

#include "questlab/alignment.hpp"
#include "questlab/errors.hpp"
#include "questlab/fixtures.hpp"
#include "questlab/harness.hpp"
#include "questlab/jsonl.hpp"
#include "questlab/kgforge.hpp"
#include "questlab/orchestrator.hpp"
#include "questlab/policyopt.hpp"
#include "questlab/remote.hpp"
#include "questlab/reportrewards.hpp"
#include "questlab/rewards.hpp"
#include "questlab/searchenv.hpp"
#include "questlab/train.hpp"

using namespace questlab;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

thread_local std::string g_last_error;

int status_of(const std::string& code) {
    if (code == "io-error") return QL_ERR_IO;
    if (code == "parse-error" || code == "malformed-file" || code == "version-mismatch")
        return QL_ERR_PARSE;
    if (code == "config-invalid") return QL_ERR_CONFIG;
    if (code == "judge-unavailable" || code == "backend-failure") return QL_ERR_BACKEND;
    return QL_ERR_INVALID;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return QL_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return QL_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

struct ql_graph {
    kg::KnowledgeGraph graph;
};

struct ql_policy {
    policy::PolicyParams params;
};

extern "C" {

const char* ql_version(void) { return "1.0.0"; }

const char* ql_status_name(int status) {
    switch (status) {
        case QL_OK: return "ok";
        case QL_ERR_IO: return "io-error";
        case QL_ERR_PARSE: return "parse-error";
        case QL_ERR_INVALID: return "invalid-argument";
        case QL_ERR_CONFIG: return "config-invalid";
        case QL_ERR_BACKEND: return "backend-failure";
        case QL_ERR_UNSUPPORTED: return "unsupported";
        default: return "internal-error";
    }
}

const char* ql_last_error(void) { return g_last_error.c_str(); }

void ql_string_free(char* s) { std::free(s); }

int ql_graph_open(const char* records_path, ql_graph** out_graph) {
    return guarded([&] {
        require(records_path && out_graph, "invalid-argument", "null argument");
        auto handle = std::make_unique<ql_graph>();
        handle->graph = kg::KnowledgeGraph::from_file(records_path);
        *out_graph = handle.release();
    });
}

void ql_graph_close(ql_graph* graph) { delete graph; }

int ql_graph_entity_count(const ql_graph* graph) {
    return graph ? static_cast<int>(graph->graph.entity_count()) : -1;
}

int ql_graph_edge_count(const ql_graph* graph) {
    return graph ? static_cast<int>(graph->graph.edge_count()) : -1;
}

int ql_policy_open(const char* path, ql_policy** out_policy) {
    return guarded([&] {
        require(path && out_policy, "invalid-argument", "null argument");
        auto handle = std::make_unique<ql_policy>();
        handle->params = policy::PolicyParams::load(path);
        *out_policy = handle.release();
    });
}

int ql_policy_init(int hops, ql_policy** out_policy) {
    return guarded([&] {
        require(out_policy, "invalid-argument", "null argument");
        require(hops >= 1 && hops <= 5, "invalid-argument", "hops must be in [1,5]");
        auto handle = std::make_unique<ql_policy>();
        handle->params =
            policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(hops));
        *out_policy = handle.release();
    });
}

void ql_policy_close(ql_policy* policy) { delete policy; }

int ql_policy_save(const ql_policy* policy, const char* path) {
    return guarded([&] {
        require(policy && path, "invalid-argument", "null argument");
        policy->params.save(path);
    });
}

int ql_write_assets(const char* dir) {
    return guarded([&] {
        require(dir, "invalid-argument", "null directory");
        fixtures::write_assets(dir);
    });
}

int ql_synth(const ql_graph* graph, int hops, int count, uint64_t seed, int obfuscate,
             const char* templates_path, const char* rules_path, const char* out_path) {
    return guarded([&] {
        require(graph && out_path, "invalid-argument", "null argument");
        kg::TemplateBank bank;
        if (templates_path && *templates_path) {
            bank = kg::TemplateBank::from_json(json::parse(jsonl::read_text_file(templates_path)));
        } else {
            bank = kg::TemplateBank::defaults();
            for (const kg::Edge& e : graph->graph.edges())
                if (!bank.relations.count(e.relation))
                    bank.relations[e.relation] = {kg::relation_phrase(e.relation)};
        }
        kg::SynthOptions options;
        options.hops = hops;
        options.count = count;
        options.seed = seed;
        options.apply_obfuscation = obfuscate != 0;
        if (rules_path && *rules_path)
            options.rules =
                kg::ObfuscationRule::from_json(json::parse(jsonl::read_text_file(rules_path)));
        else if (options.apply_obfuscation)
            options.rules = fixtures::demo_obfuscation_rules();

        std::vector<json> rows;
        for (const kg::QueryInstance& q : kg::synthesize(graph->graph, bank, options))
            rows.push_back(q.to_json());
        jsonl::write_file(out_path, rows);
    });
}

int ql_rollout(const ql_graph* graph, const char* instances_path, const ql_policy* policy,
               uint64_t seed, int max_steps, const char* out_path) {
    return guarded([&] {
        require(graph && instances_path && policy && out_path, "invalid-argument",
                "null argument");
        env::Corpus corpus(graph->graph);
        env::ToolLayerConfig tools;
        env::RolloutLimits limits;
        limits.max_steps = max_steps;
        rewards::ExactMatchJudge judge;

        std::vector<json> rows;
        std::size_t i = 0;
        for (const json& row : jsonl::read_file(instances_path)) {
            kg::QueryInstance instance = kg::QueryInstance::from_json(row);
            env::Trajectory t = env::rollout(policy->params, instance, corpus, tools, limits,
                                             Rng::mix(seed, i++));
            json record = t.to_json();
            record["reward"] =
                rewards::score_trajectory(t, instance, judge,
                                          rewards::CoefficientVector::initial())
                    .to_json();
            rows.push_back(std::move(record));
        }
        jsonl::write_file(out_path, rows);
    });
}

int ql_train(const char* config_path, const char* out_dir) {
    return guarded([&] {
        require(config_path && out_dir, "invalid-argument", "null argument");
        harness::RunConfig config = harness::RunConfig::from_file(config_path);
        config.stages = {"synth", "train"};
        harness::run_pipeline(config, out_dir);
    });
}

int ql_run(const char* config_path, const char* out_dir) {
    return guarded([&] {
        require(config_path && out_dir, "invalid-argument", "null argument");
        harness::run_pipeline(harness::RunConfig::from_file(config_path), out_dir);
    });
}

namespace {

std::vector<kg::QueryInstance> load_instances(const std::string& path) {
    std::vector<kg::QueryInstance> out;
    for (const json& row : jsonl::read_file(path)) out.push_back(kg::QueryInstance::from_json(row));
    return out;
}

policy::PolicyParams load_policy_or_default(const json& options) {
    if (options.contains("policy") && !options.at("policy").get<std::string>().empty())
        return policy::PolicyParams::load(options.at("policy").get<std::string>());
    return policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));
}

double percentile_of(std::vector<double> values, double pct) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = pct * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

void align_stage_impl(const std::string& stage, const json& options) {
    if (stage == "sample") {
        kg::KnowledgeGraph graph =
            kg::KnowledgeGraph::from_file(options.at("graph").get<std::string>());
        env::Corpus corpus(graph);
        std::vector<kg::QueryInstance> inputs =
            load_instances(options.at("instances").get<std::string>());
        if (options.contains("inputs"))
            inputs.resize(std::min<std::size_t>(inputs.size(), options.at("inputs").get<std::size_t>()));
        policy::PolicyParams params = load_policy_or_default(options);
        env::ToolLayerConfig tools;
        env::RolloutLimits limits;
        std::vector<json> rows;
        for (const align::Sample& s :
             align::self_sample(params, inputs, options.value("k", 4), corpus, tools, limits,
                                options.value("seed", 5ull)))
            rows.push_back(s.to_json());
        jsonl::write_file(options.at("out").get<std::string>(), rows);
        return;
    }
    if (stage == "score") {
        std::vector<kg::QueryInstance> inputs =
            load_instances(options.at("instances").get<std::string>());
        std::map<std::string, const kg::QueryInstance*> by_id;
        for (const kg::QueryInstance& q : inputs) by_id[q.id] = &q;
        align::QualityWeights weights;
        weights.w_judge = options.value("w_judge", weights.w_judge);
        weights.temporal_penalty = options.value("temporal_penalty", weights.temporal_penalty);
        weights.now_date = options.value("now", weights.now_date);
        std::vector<json> rows;
        for (const json& row : jsonl::read_file(options.at("in").get<std::string>())) {
            align::Sample s = align::Sample::from_json(row);
            auto it = by_id.find(s.input_id);
            require(it != by_id.end(), "invalid-argument",
                    "sample references unknown input " + s.input_id);
            align::QualityScore score = align::quality_score(
                s, *it->second, fixtures::default_rubric(it->second->query_text), weights);
            json out = s.to_json();
            out["quality"] = score.to_json();
            rows.push_back(std::move(out));
        }
        jsonl::write_file(options.at("out").get<std::string>(), rows);
        return;
    }
    if (stage == "partition") {
        std::vector<json> rows = jsonl::read_file(options.at("in").get<std::string>());
        std::map<std::string, std::vector<json>> by_input;
        for (const json& row : rows)
            by_input[row.at("input_id").get<std::string>()].push_back(row);

        const double hi_pct = options.value("tau_hi_pct", 0.7);
        const double lo_pct = options.value("tau_lo_pct", 0.3);
        std::vector<json> dplus, dminus, pairs;
        for (const auto& [input, members] : by_input) {
            (void)input;
            std::vector<double> values;
            for (const json& row : members)
                values.push_back(row.at("quality").at("combined").get<double>());
            const double tau_hi = percentile_of(values, hi_pct);
            const double tau_lo = percentile_of(values, lo_pct);
            std::vector<json> hi, lo;
            for (const json& row : members) {
                const double v = row.at("quality").at("combined").get<double>();
                if (v >= tau_hi && v > tau_lo)
                    hi.push_back(row);
                else if (v <= tau_lo && v < tau_hi)
                    lo.push_back(row);
            }
            for (const json& h : hi) {
                dplus.push_back(h);
                for (const json& l : lo) {
                    align::Sample hs = align::Sample::from_json(h);
                    align::Sample ls = align::Sample::from_json(l);
                    const double gap = h.at("quality").at("combined").get<double>() -
                                       l.at("quality").at("combined").get<double>();
                    if (gap <= 0) continue;
                    pairs.push_back(
                        {{"input_id", hs.input_id},
                         {"gap", gap},
                         {"chosen", policy::to_policy_trajectory(
                                        hs.trajectory,
                                        h.at("quality").at("combined").get<double>())
                                        .to_json()},
                         {"rejected", policy::to_policy_trajectory(
                                          ls.trajectory,
                                          l.at("quality").at("combined").get<double>())
                                          .to_json()}});
                }
            }
            for (const json& l : lo) dminus.push_back(l);
        }
        const std::string out_dir = options.at("out").get<std::string>();
        fs::create_directories(out_dir);
        jsonl::write_file(out_dir + "/dplus.jsonl", dplus);
        jsonl::write_file(out_dir + "/dminus.jsonl", dminus);
        jsonl::write_file(out_dir + "/pairs.jsonl", pairs);
        return;
    }
    if (stage == "dpo") {
        policy::PolicyParams params = load_policy_or_default(options);
        policy::PolicyParams ref = params;
        std::vector<align::PreferencePair> pairs;
        for (const json& row : jsonl::read_file(options.at("in").get<std::string>())) {
            align::PreferencePair p;
            p.input_id = row.at("input_id").get<std::string>();
            p.gap = row.at("gap").get<double>();
            p.chosen = policy::PolicyTrajectory::from_json(row.at("chosen"));
            p.rejected = policy::PolicyTrajectory::from_json(row.at("rejected"));
            pairs.push_back(std::move(p));
        }
        const double beta = options.value("beta", 0.5);
        const double lr = options.value("learning_rate", 0.5);
        const int steps = options.value("steps", 50);
        for (int i = 0; i < steps; ++i) {
            policy::LossReport loss = align::dpo_loss(params, ref, pairs, beta);
            for (std::size_t w = 0; w < params.weights.size(); ++w)
                params.weights[w] -= lr * loss.gradient[w];
        }
        params.save(options.at("out").get<std::string>());
        return;
    }
    if (stage == "self-sft") {
        policy::PolicyParams params = load_policy_or_default(options);
        std::vector<policy::PolicyTrajectory> dplus;
        for (const json& row : jsonl::read_file(options.at("in").get<std::string>())) {
            align::Sample s = align::Sample::from_json(row);
            dplus.push_back(policy::to_policy_trajectory(
                s.trajectory, row.at("quality").at("combined").get<double>()));
        }
        const double lr = options.value("learning_rate", 0.5);
        const int steps = options.value("steps", 25);
        for (int i = 0; i < steps; ++i) {
            policy::LossReport loss = align::self_sft_loss(params, dplus);
            for (std::size_t w = 0; w < params.weights.size(); ++w)
                params.weights[w] -= lr * loss.gradient[w];
        }
        params.save(options.at("out").get<std::string>());
        return;
    }
    raise("invalid-argument", "unknown alignment stage '" + stage + "'");
}

}  // namespace

int ql_align_stage(const char* stage, const char* options_json) {
    return guarded([&] {
        require(stage && options_json, "invalid-argument", "null argument");
        json options = json::parse(options_json, nullptr, false);
        require(!options.is_discarded() && options.is_object(), "parse-error",
                "options must be a JSON object");
        align_stage_impl(stage, options);
    });
}

int ql_research(const ql_graph* graph, const char* query, const char* backend, int parallelism,
                uint64_t seed, const char* out_dir) {
    return guarded([&] {
        require(graph && query && backend && out_dir, "invalid-argument", "null argument");
        env::Corpus corpus(graph->graph);
        orch::BackendConfig cfg;
        cfg.kind = orch::backend_kind_from_string(backend);
        policy::PolicyParams surrogate;
        if (cfg.kind == orch::BackendConfig::Kind::surrogate) {
            surrogate = policy::PolicyParams::zeros(env::kFeatureCount, policy::demo_vocabulary(2));
            cfg.params = &surrogate;
        }
        remote::ChatEndpoint endpoint;
        if (cfg.kind == orch::BackendConfig::Kind::remote_chat) {
            endpoint = remote::ChatEndpoint::from_env();
            cfg.endpoint = &endpoint;
        }
        env::ToolLayerConfig tools;
        env::RolloutLimits limits;
        orch::ResearchRun run =
            orch::research(query, corpus, cfg, parallelism, seed, tools, limits);
        fs::create_directories(out_dir);
        orch::persist_trace(run, std::string(out_dir) + "/research_run.jsonl");
        jsonl::write_text_file(std::string(out_dir) + "/report.md", run.report.body);
    });
}

int ql_score_report(const char* report_path, const char* rubric_path, const char* ref_path,
                    double lambda_c, double lambda_f, char** out_json) {
    return guarded([&] {
        require(report_path && rubric_path && out_json, "invalid-argument", "null argument");
        const report::Report parsed =
            report::Report::parse(jsonl::read_text_file(report_path));
        const report::RubricSet rubric = report::RubricSet::from_file(rubric_path);
        const double race =
            report::race_score(report::rule_criterion_scores(parsed, rubric, nullptr), rubric);

        int n_gen = 0, n_valid = 0, n_ref = 0;
        for (const report::Citation& c : parsed.citations) {
            if (!c.well_formed) continue;
            ++n_gen;
            if (c.resolved) ++n_valid;
        }
        if (ref_path && *ref_path) {
            const report::Report ref = report::Report::parse(jsonl::read_text_file(ref_path));
            for (const report::Citation& c : ref.citations)
                if (c.well_formed) ++n_ref;
        }
        const double cite = report::citation_reward(n_gen, n_valid, n_ref);
        const double fmt = report::format_reward_report(parsed);
        const report::FormatViolations violations = report::format_violations(parsed);
        json out = {{"race", race},
                    {"citations", {{"n_gen", n_gen}, {"n_valid", n_valid}, {"n_ref", n_ref}}},
                    {"citation_reward", cite},
                    {"format_reward", fmt},
                    {"violations",
                     {{"tag", violations.tag}, {"md", violations.md}, {"ref", violations.ref}}},
                    {"report_reward", report::report_reward(race, cite, fmt, lambda_c, lambda_f)},
                    {"lambda_c", lambda_c},
                    {"lambda_f", lambda_f}};
        if (n_ref == 0)
            out["diagnostics"] = json::array({"n_ref is 0: the citation gate is trivially met"});
        *out_json = dup_string(out.dump(2));
    });
}

int ql_tense(const char* report_path, const char* now_date, char** out_json) {
    return guarded([&] {
        require(report_path && now_date && out_json, "invalid-argument", "null argument");
        const std::string body = jsonl::read_text_file(report_path);
        report::RuleAttribution backend;
        json findings = json::array();
        int errors = 0;
        for (const report::TemporalFinding& f :
             report::detect_temporal(body, report::Date::parse(now_date), backend)) {
            if (f.is_error) ++errors;
            findings.push_back({{"sentence", f.candidate.sentence},
                                {"keyword", f.candidate.keyword},
                                {"year", f.candidate.predicted.year},
                                {"quarter", f.candidate.predicted.quarter},
                                {"attribution_found", f.attribution_found},
                                {"resolved", f.resolved},
                                {"verdict", f.is_error ? "error" : "ok"}});
        }
        *out_json = dup_string(
            json{{"now", now_date}, {"errors", errors}, {"findings", findings}}.dump(2));
    });
}

int ql_eval(const char* traces_path, const char* run_trace_path, const char* reports_dir,
            const char* now_date, char** out_json) {
    return guarded([&] {
        require(now_date && out_json, "invalid-argument", "null argument");
        std::vector<env::Trajectory> traces;
        std::vector<harness::ReportInput> reports;
        if (traces_path && *traces_path)
            for (const json& row : jsonl::read_file(traces_path))
                traces.push_back(env::Trajectory::from_json(row));
        if (run_trace_path && *run_trace_path) {
            orch::ResearchRun run = orch::load_trace(run_trace_path);
            for (const env::Trajectory& t : run.trajectories) traces.push_back(t);
            reports.push_back({run.report.outline, run.report.body});
        }
        if (reports_dir && *reports_dir) {
            std::vector<std::string> paths;
            for (const auto& entry : fs::directory_iterator(reports_dir))
                if (entry.path().extension() == ".md") paths.push_back(entry.path().string());
            std::sort(paths.begin(), paths.end());
            for (const std::string& p : paths)
                reports.push_back({std::nullopt, jsonl::read_text_file(p)});
        }
        harness::MetricsReport metrics =
            harness::module_eval(traces, reports, report::Date::parse(now_date));
        *out_json = dup_string(metrics.to_json().dump(2));
    });
}

int ql_stop_threshold(int trials, int min_valid, double confidence, double* out_p) {
    return guarded([&] {
        require(out_p, "invalid-argument", "null output");
        *out_p = policy::sft_stop_threshold({trials, min_valid, confidence});
    });
}

}  // extern "C"
