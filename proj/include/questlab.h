/* questlab C API: stable shared-library surface over the pipeline.
 *
 * Conventions: every function returning int yields QL_OK (0) on success or a
 * QL_ERR_* status; ql_last_error() returns a thread-local description of the
 * most recent failure on the calling thread. Strings returned through char**
 * are heap-allocated and must be released with ql_string_free().
 */
#ifndef QUESTLAB_H
#define QUESTLAB_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define QL_OK 0
#define QL_ERR_IO 1
#define QL_ERR_PARSE 2
#define QL_ERR_INVALID 3
#define QL_ERR_CONFIG 4
#define QL_ERR_BACKEND 5
#define QL_ERR_UNSUPPORTED 6
#define QL_ERR_INTERNAL 7

const char* ql_version(void);
const char* ql_status_name(int status);
const char* ql_last_error(void);
void ql_string_free(char* s);

/* Opaque handles. */
typedef struct ql_graph ql_graph;
typedef struct ql_policy ql_policy;

int ql_graph_open(const char* records_path, ql_graph** out_graph);
void ql_graph_close(ql_graph* graph);
int ql_graph_entity_count(const ql_graph* graph);
int ql_graph_edge_count(const ql_graph* graph);

int ql_policy_open(const char* path, ql_policy** out_policy);
int ql_policy_init(int hops, ql_policy** out_policy); /* zero-initialized surrogate */
void ql_policy_close(ql_policy* policy);
int ql_policy_save(const ql_policy* policy, const char* path);

/* Writes the bundled demo corpus and prompt/rubric assets under dir. */
int ql_write_assets(const char* dir);

/* Query synthesis: emits `count` verified instances as JSON Lines.
 * templates_path/rules_path may be NULL (defaults derived from the graph). */
int ql_synth(const ql_graph* graph, int hops, int count, uint64_t seed, int obfuscate,
             const char* templates_path, const char* rules_path, const char* out_path);

/* ReAct rollouts over an instance file; one trajectory per line with its
 * reward breakdown attached. */
int ql_rollout(const ql_graph* graph, const char* instances_path, const ql_policy* policy,
               uint64_t seed, int max_steps, const char* out_path);

/* Pipeline stages driven by a run-config document. */
int ql_train(const char* config_path, const char* out_dir);
int ql_run(const char* config_path, const char* out_dir);

/* One alignment stage: "sample" | "score" | "partition" | "dpo" | "self-sft".
 * options_json carries the stage inputs; see the CLI or docs/formats.md. */
int ql_align_stage(const char* stage, const char* options_json);

/* Three-agent research pipeline; writes research_run.jsonl and report.md. */
int ql_research(const ql_graph* graph, const char* query, const char* backend, int parallelism,
                uint64_t seed, const char* out_dir);

/* Rubric scoring of a report (optionally against a reference report for the
 * citation-count reward). Returns a JSON document. */
int ql_score_report(const char* report_path, const char* rubric_path, const char* ref_path,
                    double lambda_c, double lambda_f, char** out_json);

/* Two-stage temporal tense-error detection with the rule backend. */
int ql_tense(const char* report_path, const char* now_date, char** out_json);

/* Trace-based module evaluation; any of the three inputs may be NULL. */
int ql_eval(const char* traces_path, const char* run_trace_path, const char* reports_dir,
            const char* now_date, char** out_json);

/* Largest per-trajectory failure probability meeting the validity criterion. */
int ql_stop_threshold(int trials, int min_valid, double confidence, double* out_p);

#ifdef __cplusplus
}
#endif

#endif /* QUESTLAB_H */
