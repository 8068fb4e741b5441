/*
 * gradfix - gradient-sign masked task-vector transport, C API.
 *
 * Opaque handles, integer status codes. Every function that can fail returns
 * a gfx_status; gfx_last_error() describes the most recent failure on the
 * calling thread. Handles are freed with their gfx_*_free function; freeing
 * NULL is a no-op.
 */

#ifndef GRADFIX_H
#define GRADFIX_H

#include <stddef.h>
#include <stdint.h>

#ifdef _WIN32
#  ifdef GFX_BUILD
#    define GFX_API __declspec(dllexport)
#  else
#    define GFX_API __declspec(dllimport)
#  endif
#else
#  define GFX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as CLI exit codes. */
typedef enum gfx_status {
    GFX_OK          = 0,
    GFX_ERR_CONFIG  = 2,  /* bad config/arguments, structure mismatch */
    GFX_ERR_NUMERIC = 3,  /* divergence, non-finite values */
    GFX_ERR_IO      = 4,  /* filesystem, format, checksum */
    GFX_ERR_UNKNOWN = 5
} gfx_status;

typedef struct gfx_config  gfx_config;   /* experiment configuration */
typedef struct gfx_params  gfx_params;   /* parameter / task vector */
typedef struct gfx_signs   gfx_signs;    /* {-1,0,+1} sign vector */
typedef struct gfx_mask    gfx_mask;     /* binary or signed mask */
typedef struct gfx_dataset gfx_dataset;  /* labeled dataset */

GFX_API const char * gfx_version(void);
GFX_API const char * gfx_last_error(void);

/* ------------------------------------------------------------------ */
/* configuration                                                       */

GFX_API gfx_status gfx_config_default(gfx_config ** out);
GFX_API gfx_status gfx_config_load(const char * path, gfx_config ** out);
/* dotted_key is "section.key", e.g. "world.input_dim" */
GFX_API gfx_status gfx_config_set(gfx_config * cfg, const char * dotted_key, const char * value);
GFX_API gfx_status gfx_config_hash(const gfx_config * cfg, char * buf, size_t buf_len);
GFX_API void       gfx_config_free(gfx_config * cfg);

/* ------------------------------------------------------------------ */
/* checkpoints, sign files, masks, datasets                            */

GFX_API gfx_status gfx_params_load(const char * path, gfx_params ** out);
GFX_API gfx_status gfx_params_save(const gfx_params * v, const char * path);
GFX_API gfx_status gfx_params_numel(const gfx_params * v, int64_t * out);
GFX_API void       gfx_params_free(gfx_params * v);

GFX_API gfx_status gfx_signs_load(const char * path, gfx_signs ** out);
GFX_API gfx_status gfx_signs_save(const gfx_signs * v, const char * path);
GFX_API void       gfx_signs_free(gfx_signs * v);

GFX_API gfx_status gfx_mask_load(const char * path, gfx_mask ** out);
GFX_API gfx_status gfx_mask_save(const gfx_mask * m, const char * path);
GFX_API void       gfx_mask_free(gfx_mask * m);

/* CSV with header f0..f{d-1},label; dims from the config's world/model */
GFX_API gfx_status gfx_dataset_load_csv(const gfx_config * cfg, const char * path, gfx_dataset ** out);
GFX_API gfx_status gfx_dataset_size(const gfx_dataset * d, int64_t * out);
GFX_API void       gfx_dataset_free(gfx_dataset * d);

/* ------------------------------------------------------------------ */
/* parameter-space operations                                          */

GFX_API gfx_status gfx_diff(const gfx_params * theta_ft, const gfx_params * theta_0, gfx_params ** tau);
GFX_API gfx_status gfx_add_scaled(const gfx_params * theta, const gfx_params * delta, double scale,
                                  gfx_params ** out);
GFX_API gfx_status gfx_sign_of(const gfx_params * v, double zero_tol, gfx_signs ** out);
GFX_API gfx_status gfx_apply_mask(const gfx_mask * mask, const gfx_params * tau, gfx_params ** out);

/* Writes CSV (group, agree_fraction, n_nonzero_pairs) to out_path, or prints
 * to stdout when out_path is NULL. per_segment: 0 = whole, 1 = per segment. */
GFX_API gfx_status gfx_agreement_stats(const gfx_signs * a, const gfx_signs * b, int per_segment,
                                       const char * out_path);

/* ------------------------------------------------------------------ */
/* world generation, training, evaluation                              */

/* Writes pretrain_a.csv, pretrain_b.csv, train.csv, val.csv, test.csv. */
GFX_API gfx_status gfx_world_generate(const gfx_config * cfg, uint64_t seed, const char * out_dir);

/* section: "pretrain", "finetune" or "fewshot". theta0 NULL means a fresh
 * seeded initialization. */
GFX_API gfx_status gfx_train(const gfx_config * cfg, const char * section, const gfx_params * theta0,
                             const gfx_dataset * data, uint64_t seed, gfx_params ** out);

GFX_API gfx_status gfx_evaluate(const gfx_config * cfg, const gfx_params * theta,
                                const gfx_dataset * data, double * accuracy, double * mean_loss);

/* ------------------------------------------------------------------ */
/* subset selection and sign estimation                                */

/* heuristic: random | herding | kmedoids | coreset | coreset_coverage
 * (farthest-point variant). theta_embed supplies the frozen encoder for the
 * structured heuristics (ignored for random). Writes CSV
 * (class, rank, source_id) when out_csv is non-NULL. */
GFX_API gfx_status gfx_select_subset(const gfx_config * cfg, const gfx_dataset * data,
                                     const gfx_params * theta_embed, const char * heuristic,
                                     int budget, uint64_t seed, const char * out_csv,
                                     gfx_dataset ** out_subset);

/* aggregation: majority | mean. margins_csv may be NULL. */
GFX_API gfx_status gfx_estimate_signs(const gfx_config * cfg, const gfx_params * theta_b,
                                      const gfx_dataset * subset, const char * aggregation,
                                      const char * margins_csv, gfx_signs ** out);

/* ------------------------------------------------------------------ */
/* masks and transport                                                 */

/* strategy: agreement | force_agreement | random. tau_a supplies the sign
 * template; ref may be NULL for the random strategy. */
GFX_API gfx_status gfx_build_mask(const gfx_config * cfg, const char * strategy,
                                  const gfx_params * tau_a, const gfx_signs * ref, uint64_t seed,
                                  gfx_mask ** out);

/* reference: gradient_signs (theta_B - delta) | oracle_tau_b (theta_B + delta).
 * descent_inner_product may be NULL. */
GFX_API gfx_status gfx_transport(const gfx_params * theta_b, const gfx_mask * mask,
                                 const gfx_params * tau_a, double alpha, const char * reference,
                                 gfx_params ** out);

GFX_API gfx_status gfx_descent_check(const gfx_params * gradient, const gfx_params * delta,
                                     double * inner_product);

/* ------------------------------------------------------------------ */
/* concentration-bound lab                                             */

GFX_API gfx_status gfx_hoeffding_bound(double p, int64_t n, double * out);
GFX_API gfx_status gfx_exact_binomial_majority(double p, int64_t n, double * out);

/* Appends one CSV row per (p, N) cell: p,N,trials,empirical,wilson_lo,
 * wilson_hi,exact_binomial,hoeffding. out_path NULL prints to stdout. */
GFX_API gfx_status gfx_boundlab_bernoulli(const double * p_grid, size_t p_count,
                                          const int64_t * n_grid, size_t n_count, int64_t trials,
                                          uint64_t seed, const char * out_path);

/* channel: gaussian | student_t. Emits one CSV row:
 * channel,signal,sigma,nu,N,trials,rate_majority,rate_mean,diff,diff_lo,diff_hi */
GFX_API gfx_status gfx_boundlab_compare(const char * channel, double signal, double sigma, double nu,
                                        int64_t n, int64_t trials, uint64_t seed,
                                        const char * out_path);

/* ------------------------------------------------------------------ */
/* experiment pipelines                                                */

/* Full protocol: report.csv / report.json plus per-seed checkpoints under
 * out_dir (falls back to the config's output_dir when NULL). */
GFX_API gfx_status gfx_pipeline_run(const gfx_config * cfg, const char * out_dir);

/* variant: oracle | gradfix. Writes alpha,val_accuracy,test_accuracy,selected
 * rows; selected_alpha may be NULL. */
GFX_API gfx_status gfx_sweep_alpha(const gfx_config * cfg, const char * variant,
                                   const char * out_path, double * selected_alpha);

#ifdef __cplusplus
}
#endif

#endif /* GRADFIX_H */
