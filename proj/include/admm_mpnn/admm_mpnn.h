/* C interface to the learned distributed-ADMM library.
 *
 * All objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns an admm_status; on
 * failure admm_last_error() describes the problem (thread-local, valid until
 * the next failing call on the same thread). Status values double as CLI
 * exit codes. */
#ifndef ADMM_MPNN_H
#define ADMM_MPNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(ADMM_MPNN_BUILDING)
#    define ADMM_MPNN_API __declspec(dllexport)
#  else
#    define ADMM_MPNN_API __declspec(dllimport)
#  endif
#else
#  define ADMM_MPNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum admm_status {
  ADMM_OK = 0,
  ADMM_ERR_CONFIG = 2,   /* bad arguments, variant/class mismatch, contract violations */
  ADMM_ERR_NUMERIC = 3,  /* non-finite values, singular systems, resampling budget exhausted */
  ADMM_ERR_IO = 4        /* file system errors, malformed or version-mismatched files */
} admm_status;

typedef enum admm_problem_class { ADMM_CONSENSUS = 0, ADMM_LEAST_SQUARES = 1 } admm_problem_class;

typedef enum admm_variant {
  ADMM_VARIANT_BASELINE = 0,
  ADMM_VARIANT_GLOBAL_ALPHA = 1,
  ADMM_VARIANT_LOCAL_ALPHA = 2,
  ADMM_VARIANT_EDGE_WEIGHTS = 3,
  ADMM_VARIANT_COMBINED = 4
} admm_variant;

typedef struct admm_dataset admm_dataset;
typedef struct admm_model admm_model;

typedef struct admm_gen_options {
  admm_problem_class problem_class;
  int num_nodes;     /* m */
  int dim;           /* n */
  double edge_prob;  /* Erdos-Renyi p */
  int unroll_steps;  /* K for the stored baseline iterate */
  uint64_t seed;
} admm_gen_options;

typedef struct admm_train_options {
  admm_problem_class problem_class;
  admm_variant variant;
  int dim;
  int unroll_steps;
  int epochs;
  int batch_size;
  double lr;
  double clip;
  double eps_loss;
  uint64_t seed;
  int threads;
} admm_train_options;

ADMM_MPNN_API const char* admm_last_error(void);
ADMM_MPNN_API const char* admm_status_string(admm_status status);
ADMM_MPNN_API const char* admm_version(void);

ADMM_MPNN_API void admm_gen_options_default(admm_gen_options* opts);
ADMM_MPNN_API void admm_train_options_default(admm_train_options* opts);

ADMM_MPNN_API admm_status admm_parse_problem_class(const char* name, admm_problem_class* out);
ADMM_MPNN_API admm_status admm_parse_variant(const char* name, admm_variant* out);
ADMM_MPNN_API const char* admm_variant_name(admm_variant variant);

/* Dataset split "train" | "val" | "test"; instance streams derive from (seed, split, index). */
ADMM_MPNN_API admm_status admm_dataset_generate(const admm_gen_options* opts, const char* split, size_t count,
                                                admm_dataset** out);
ADMM_MPNN_API admm_status admm_dataset_load(const char* path, admm_dataset** out);
ADMM_MPNN_API admm_status admm_dataset_save(const admm_dataset* ds, const char* path);
ADMM_MPNN_API size_t admm_dataset_size(const admm_dataset* ds);
ADMM_MPNN_API admm_problem_class admm_dataset_class(const admm_dataset* ds);
ADMM_MPNN_API void admm_dataset_free(admm_dataset* ds);

/* Freshly initialized model (Glorot-uniform heads). */
ADMM_MPNN_API admm_status admm_model_create(admm_variant variant, int unroll_steps, int dim, uint64_t seed,
                                            admm_model** out);
/* Loads the model stored in a checkpoint file (ckpt_best.json / ckpt_last.json). */
ADMM_MPNN_API admm_status admm_model_load(const char* checkpoint_path, admm_model** out);
ADMM_MPNN_API admm_variant admm_model_variant(const admm_model* model);
ADMM_MPNN_API size_t admm_model_param_count(const admm_model* model);
ADMM_MPNN_API void admm_model_free(admm_model* model);

/* Trains and writes {run_dir}/ckpt_best.json, ckpt_last.json, train_log.jsonl.
 * resume_checkpoint may be NULL. best_out may be NULL. */
ADMM_MPNN_API admm_status admm_train(const admm_train_options* opts, const admm_dataset* train,
                                     const admm_dataset* val, const char* run_dir, const char* resume_checkpoint,
                                     admm_model** best_out);

/* Normalized loss of one instance after the model's K iterations (model NULL: baseline, K from the instance). */
ADMM_MPNN_API admm_status admm_instance_loss(const admm_model* model, const admm_dataset* ds, size_t index,
                                             double eps_loss, double* out);
ADMM_MPNN_API admm_status admm_validate(const admm_model* model, const admm_dataset* ds, double eps_loss,
                                        double* out);

/* Baseline plus the given models on the test split; writes report.csv, report.txt and
 * per-variant trace CSVs into out_dir. Each required variant must be present among the models. */
ADMM_MPNN_API admm_status admm_evaluate(const admm_model* const* models, size_t n_models, const admm_dataset* test,
                                        const int* ks, size_t n_ks, int trace_kmax,
                                        const admm_variant* required, size_t n_required, const char* out_dir);

/* Per-iteration trace (k = 0..k_max) of one instance; model NULL runs the baseline. */
ADMM_MPNN_API admm_status admm_trace(const admm_model* model, const admm_dataset* ds, size_t index, int k_max,
                                     const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif /* ADMM_MPNN_H */
