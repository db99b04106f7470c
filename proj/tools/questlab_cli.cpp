// questlab command line. Deliberately built against the public C API only;
// everything here goes through questlab.h.

#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "questlab.h"

namespace {

int fail(int status) {
    std::fprintf(stderr, "error (%s): %s\n", ql_status_name(status), ql_last_error());
    return status == QL_OK ? 1 : status;
}

struct GraphHandle {
    ql_graph* graph = nullptr;
    ~GraphHandle() { ql_graph_close(graph); }
    int open(const std::string& path) { return ql_graph_open(path.c_str(), &graph); }
};

struct PolicyHandle {
    ql_policy* policy = nullptr;
    ~PolicyHandle() { ql_policy_close(policy); }
    int open_or_init(const std::string& path, int hops) {
        return path.empty() ? ql_policy_init(hops, &policy)
                            : ql_policy_open(path.c_str(), &policy);
    }
};

int print_owned(char* s) {
    if (!s) return 1;
    std::printf("%s\n", s);
    ql_string_free(s);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"questlab: knowledge-graph query synthesis, simulated search agents, and "
                 "report scoring"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ql_version()));

    // synth
    auto* synth = app.add_subcommand("synth", "Synthesize multi-hop query instances");
    std::string synth_graph, synth_out, synth_templates, synth_rules;
    int synth_hops = 2, synth_count = 10;
    std::uint64_t synth_seed = 1;
    bool synth_obfuscate = false;
    synth->add_option("--graph", synth_graph, "graph records (JSON Lines)")->required();
    synth->add_option("--hops", synth_hops, "hops per instance (1-5)")->required();
    synth->add_option("--count", synth_count, "instances to emit")->required();
    synth->add_option("--seed", synth_seed, "random seed")->required();
    synth->add_option("--out", synth_out, "output instance file")->required();
    synth->add_option("--templates", synth_templates, "template bank JSON (default: derived)");
    synth->add_option("--rules", synth_rules, "obfuscation rules JSON");
    synth->add_flag("--obfuscate", synth_obfuscate, "apply obfuscation rules");

    // rollout
    auto* rollout = app.add_subcommand("rollout", "Roll out trajectories over instances");
    std::string ro_graph, ro_instances, ro_policy, ro_out;
    std::uint64_t ro_seed = 1;
    int ro_max_steps = 8;
    rollout->add_option("--graph", ro_graph, "graph records")->required();
    rollout->add_option("--instances", ro_instances, "instance file")->required();
    rollout->add_option("--policy", ro_policy, "policy file (default: fresh surrogate)");
    rollout->add_option("--seed", ro_seed, "random seed")->required();
    rollout->add_option("--max-steps", ro_max_steps, "step limit per trajectory")->required();
    rollout->add_option("--out", ro_out, "trace output (JSON Lines)")->required();

    // train
    auto* train = app.add_subcommand("train", "Run the synth+train pipeline from a config");
    std::string train_config, train_out;
    train->add_option("--config", train_config, "run config document")->required();
    train->add_option("--out", train_out, "artifact directory")->required();

    // align
    auto* align = app.add_subcommand("align", "Preference-alignment stages");
    std::string al_stage, al_graph, al_instances, al_policy, al_in, al_out, al_now = "2026-06-30";
    int al_k = 4, al_steps = 50, al_inputs = 8;
    double al_tau_hi = 0.7, al_tau_lo = 0.3, al_beta = 0.5, al_lr = 0.5;
    std::uint64_t al_seed = 5;
    align->add_option("--stage", al_stage, "sample | score | partition | dpo | self-sft")
        ->required();
    align->add_option("--graph", al_graph, "graph records (sample stage)");
    align->add_option("--instances", al_instances, "instance file (sample/score)");
    align->add_option("--policy", al_policy, "policy file");
    align->add_option("--in", al_in, "stage input file");
    align->add_option("--out", al_out, "stage output file or directory")->required();
    align->add_option("--k", al_k, "samples per input");
    align->add_option("--inputs", al_inputs, "instances to sample");
    align->add_option("--steps", al_steps, "gradient steps (dpo/self-sft)");
    align->add_option("--tau-hi-pct", al_tau_hi, "upper percentile for D+");
    align->add_option("--tau-lo-pct", al_tau_lo, "lower percentile for D-");
    align->add_option("--beta", al_beta, "DPO preference strength");
    align->add_option("--learning-rate", al_lr, "gradient step size");
    align->add_option("--seed", al_seed, "random seed");
    align->add_option("--now", al_now, "reference date for temporal checks");

    // research
    auto* research = app.add_subcommand("research", "Plan, search, and synthesize a report");
    std::string re_graph, re_query, re_backend = "scripted", re_out;
    int re_parallelism = 2;
    std::uint64_t re_seed = 9;
    research->add_option("--graph", re_graph, "graph records")->required();
    research->add_option("--query", re_query, "research query")->required();
    research->add_option("--backend", re_backend, "scripted | surrogate | remote_chat");
    research->add_option("--parallelism", re_parallelism, "concurrent subtask agents");
    research->add_option("--seed", re_seed, "random seed");
    research->add_option("--out", re_out, "output directory")->required();

    // score-report
    auto* score = app.add_subcommand("score-report", "Score a markdown report against a rubric");
    std::string sc_report, sc_rubric, sc_ref;
    double sc_lambda_c = 0.1, sc_lambda_f = 0.1;
    score->add_option("--report", sc_report, "report markdown")->required();
    score->add_option("--rubric", sc_rubric, "rubric JSON")->required();
    score->add_option("--ref", sc_ref, "reference report markdown");
    score->add_option("--lambda-c", sc_lambda_c, "citation reward weight");
    score->add_option("--lambda-f", sc_lambda_f, "format reward weight");

    // tense
    auto* tense = app.add_subcommand("tense", "Detect temporal tense errors in a report");
    std::string te_report, te_now;
    tense->add_option("--report", te_report, "report markdown")->required();
    tense->add_option("--now", te_now, "reference date (YYYY-MM-DD)")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Module evaluation over persisted traces");
    std::string ev_traces, ev_run, ev_reports, ev_now = "2026-06-30";
    eval->add_option("--traces", ev_traces, "rollout trace file");
    eval->add_option("--run", ev_run, "research run trace");
    eval->add_option("--reports", ev_reports, "directory of report .md files");
    eval->add_option("--now", ev_now, "reference date");

    // run
    auto* run = app.add_subcommand("run", "Execute the configured pipeline stages");
    std::string run_config, run_out;
    run->add_option("--config", run_config, "run config document")->required();
    run->add_option("--out", run_out, "artifact directory")->required();

    // assets
    auto* assets = app.add_subcommand("assets", "Write the bundled demo corpus and prompts");
    std::string as_dir;
    assets->add_option("--out", as_dir, "target directory")->required();

    // stop-threshold
    auto* stopt = app.add_subcommand("stop-threshold",
                                     "Early-stop failure-probability bound for group sampling");
    int st_trials = 8, st_min_valid = 2;
    double st_confidence = 0.95;
    stopt->add_option("--trials", st_trials, "samples per query");
    stopt->add_option("--min-valid", st_min_valid, "required valid samples");
    stopt->add_option("--confidence", st_confidence, "success probability bound");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        GraphHandle g;
        if (int s = g.open(synth_graph); s != QL_OK) return fail(s);
        int s = ql_synth(g.graph, synth_hops, synth_count, synth_seed, synth_obfuscate ? 1 : 0,
                         synth_templates.empty() ? nullptr : synth_templates.c_str(),
                         synth_rules.empty() ? nullptr : synth_rules.c_str(), synth_out.c_str());
        if (s != QL_OK) return fail(s);
        std::printf("wrote %s\n", synth_out.c_str());
        return 0;
    }
    if (rollout->parsed()) {
        GraphHandle g;
        if (int s = g.open(ro_graph); s != QL_OK) return fail(s);
        PolicyHandle p;
        if (int s = p.open_or_init(ro_policy, 2); s != QL_OK) return fail(s);
        int s = ql_rollout(g.graph, ro_instances.c_str(), p.policy, ro_seed, ro_max_steps,
                           ro_out.c_str());
        if (s != QL_OK) return fail(s);
        std::printf("wrote %s\n", ro_out.c_str());
        return 0;
    }
    if (train->parsed()) {
        if (int s = ql_train(train_config.c_str(), train_out.c_str()); s != QL_OK) return fail(s);
        std::printf("training artifacts in %s\n", train_out.c_str());
        return 0;
    }
    if (align->parsed()) {
        std::string options = "{";
        auto add = [&](const std::string& key, const std::string& value, bool quote) {
            if (options.size() > 1) options += ",";
            options += "\"" + key + "\":" + (quote ? "\"" + value + "\"" : value);
        };
        if (!al_graph.empty()) add("graph", al_graph, true);
        if (!al_instances.empty()) add("instances", al_instances, true);
        if (!al_policy.empty()) add("policy", al_policy, true);
        if (!al_in.empty()) add("in", al_in, true);
        add("out", al_out, true);
        add("k", std::to_string(al_k), false);
        add("inputs", std::to_string(al_inputs), false);
        add("steps", std::to_string(al_steps), false);
        add("tau_hi_pct", std::to_string(al_tau_hi), false);
        add("tau_lo_pct", std::to_string(al_tau_lo), false);
        add("beta", std::to_string(al_beta), false);
        add("learning_rate", std::to_string(al_lr), false);
        add("seed", std::to_string(al_seed), false);
        add("now", al_now, true);
        options += "}";
        if (int s = ql_align_stage(al_stage.c_str(), options.c_str()); s != QL_OK)
            return fail(s);
        std::printf("alignment stage %s -> %s\n", al_stage.c_str(), al_out.c_str());
        return 0;
    }
    if (research->parsed()) {
        GraphHandle g;
        if (int s = g.open(re_graph); s != QL_OK) return fail(s);
        int s = ql_research(g.graph, re_query.c_str(), re_backend.c_str(), re_parallelism,
                            re_seed, re_out.c_str());
        if (s != QL_OK) return fail(s);
        std::printf("research artifacts in %s\n", re_out.c_str());
        return 0;
    }
    if (score->parsed()) {
        char* out = nullptr;
        int s = ql_score_report(sc_report.c_str(), sc_rubric.c_str(),
                                sc_ref.empty() ? nullptr : sc_ref.c_str(), sc_lambda_c,
                                sc_lambda_f, &out);
        if (s != QL_OK) return fail(s);
        return print_owned(out);
    }
    if (tense->parsed()) {
        char* out = nullptr;
        int s = ql_tense(te_report.c_str(), te_now.c_str(), &out);
        if (s != QL_OK) return fail(s);
        return print_owned(out);
    }
    if (eval->parsed()) {
        char* out = nullptr;
        int s = ql_eval(ev_traces.empty() ? nullptr : ev_traces.c_str(),
                        ev_run.empty() ? nullptr : ev_run.c_str(),
                        ev_reports.empty() ? nullptr : ev_reports.c_str(), ev_now.c_str(), &out);
        if (s != QL_OK) return fail(s);
        return print_owned(out);
    }
    if (run->parsed()) {
        if (int s = ql_run(run_config.c_str(), run_out.c_str()); s != QL_OK) return fail(s);
        std::printf("pipeline artifacts in %s\n", run_out.c_str());
        return 0;
    }
    if (assets->parsed()) {
        if (int s = ql_write_assets(as_dir.c_str()); s != QL_OK) return fail(s);
        std::printf("assets written to %s\n", as_dir.c_str());
        return 0;
    }
    if (stopt->parsed()) {
        double p = 0.0;
        if (int s = ql_stop_threshold(st_trials, st_min_valid, st_confidence, &p); s != QL_OK)
            return fail(s);
        std::printf("{\"p_max\": %.9f}\n", p);
        return 0;
    }
    return 1;
}
