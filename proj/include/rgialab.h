#ifndef RGIALAB_H
#define RGIALAB_H

/* C interface to the rgialab core: a desk-scale laboratory for gradient
 * inversion attacks on federated TD learning. Objects are opaque handles;
 * every fallible call returns a status code and leaves a description in
 * rgia_last_error() (thread-local). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rgia_status {
  RGIA_OK = 0,
  RGIA_ERR_CONFIG = 2,   /* bad config / usage */
  RGIA_ERR_NUMERIC = 3,  /* non-finite values, diverged runs */
  RGIA_ERR_SHAPE = 4,    /* dimension mismatch */
  RGIA_ERR_PROTOCOL = 5, /* packet/fingerprint violations */
  RGIA_ERR_IO = 6        /* file errors */
} rgia_status;

const char* rgia_version(void);

/* Message for the most recent failing call on this thread. */
const char* rgia_last_error(void);

/* Frees strings returned through char** out-parameters. */
void rgia_string_free(char* s);

/* ---- environments ---- */

typedef struct rgia_env rgia_env;

/* spec_json: {"kind":"gridlake"|"pointmass"|"pixelgrid", ...} */
rgia_status rgia_env_create(const char* spec_json, rgia_env** out);
void rgia_env_free(rgia_env* env);
int rgia_env_state_dim(const rgia_env* env);
int rgia_env_action_dim(const rgia_env* env);
/* 16x16 grayscale rendering of a grid cell; out must hold 256 doubles. */
rgia_status rgia_env_render_pixel(const rgia_env* env, int cell, double* out);

/* ---- datasets ---- */

typedef struct rgia_dataset rgia_dataset;

rgia_status rgia_dataset_generate(const rgia_env* env, int n, uint64_t seed,
                                  rgia_dataset** out);
rgia_status rgia_dataset_load(const char* path, rgia_dataset** out);
rgia_status rgia_dataset_save(const rgia_dataset* ds, const char* path);
size_t rgia_dataset_size(const rgia_dataset* ds);
void rgia_dataset_free(rgia_dataset* ds);

/* ---- Q-networks ---- */

typedef struct rgia_qnet rgia_qnet;

/* spec_json: {"input_dim":..,"hidden_dims":[..],"output_dim":..,
 *             "activation":"tanh"|"relu"} */
rgia_status rgia_qnet_create(const char* spec_json, uint64_t seed,
                             rgia_qnet** out);
rgia_status rgia_qnet_load(const char* path, rgia_qnet** out);
rgia_status rgia_qnet_save(const rgia_qnet* net, const char* path);
int rgia_qnet_param_count(const rgia_qnet* net);
rgia_status rgia_qnet_forward(const rgia_qnet* net, const double* input,
                              size_t input_len, double* output,
                              size_t output_len);
void rgia_qnet_free(rgia_qnet* net);

/* ---- metrics ---- */

rgia_status rgia_metric_mse(const double* a, const double* b, size_t len,
                            double* out);
rgia_status rgia_metric_psnr(const double* a, const double* b, size_t len,
                             double max_val, double* out);
rgia_status rgia_metric_ssim(const double* a, const double* b, int height,
                             int width, int window, double max_val,
                             double* out);
/* states: n rows of dim doubles, row-major. */
rgia_status rgia_metric_pairwise_euclidean(const double* states, size_t n,
                                           size_t dim, double* out);
rgia_status rgia_metric_silhouette(const double* states, const int* labels,
                                   size_t n, size_t dim, double* out);
rgia_status rgia_metric_covariance_determinant(const double* states, size_t n,
                                               size_t dim, double* out);

/* ---- experiment pipelines ---- */

/* Runs one named pipeline (same names as the CLI subcommands): train,
 * attack, ablate, sensitivity, defense-sweep, batch-sweep, multistart,
 * prior-study, transition-study, report. config_json follows the documented
 * schema; outputs are written under the config's out_dir. seed, when
 * non-NULL, replaces the config's seed list; out_dir, when non-NULL,
 * replaces the config's output directory. */
rgia_status rgia_run_experiment(const char* subcommand, const char* config_json,
                                const char* out_dir, const uint64_t* seed,
                                int deterministic);

/* Canonical config hash, as stamped into report rows. */
rgia_status rgia_config_hash(const char* config_json, char** out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RGIALAB_H */
