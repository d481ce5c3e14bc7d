/*
 * C interface to the text-guided multimodal video anomaly detection library.
 *
 * All functions that can fail return a tgvad_status; TGVAD_OK is zero.
 * On failure, tgvad_last_error(session) holds a human-readable message
 * until the next call on the same session. Sessions are not thread-safe;
 * use one session per thread.
 *
 * Paths are NUL-terminated UTF-8. Subcommand-style entry points compose
 * through files only: datasets, caption stores, model parameters and score
 * curves all live on disk.
 */

#ifndef TGVAD_H
#define TGVAD_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tgvad_status {
    TGVAD_OK = 0,
    TGVAD_ERR_DIMENSION = 1, /* tensor shapes disagree */
    TGVAD_ERR_ALIGNMENT = 2, /* snippet/score/label counts disagree */
    TGVAD_ERR_CONFIG = 3,    /* invalid configuration */
    TGVAD_ERR_CONTRACT = 4,  /* API misuse or empty input */
    TGVAD_ERR_NUMERIC = 5,   /* non-finite values, diverged training */
    TGVAD_ERR_PARSE = 6,     /* malformed file contents */
    TGVAD_ERR_IO = 7,        /* missing or unwritable files */
    TGVAD_ERR_BACKEND = 8,   /* LLM backend failure */
    TGVAD_ERR_METRIC = 9,    /* metric undefined on the input */
    TGVAD_ERR_INTERNAL = 10
} tgvad_status;

typedef struct tgvad_session tgvad_session;

const char* tgvad_version(void);
const char* tgvad_status_name(tgvad_status status);

tgvad_status tgvad_session_create(tgvad_session** out_session);
void tgvad_session_destroy(tgvad_session* session);
const char* tgvad_last_error(const tgvad_session* session);

/* Loads a key=value config file into the session. */
tgvad_status tgvad_load_config(tgvad_session* session, const char* path);
/* Overrides one config key. */
tgvad_status tgvad_set_option(tgvad_session* session, const char* key, const char* value);
/* Selects the LLM backend: "mock" (default) or "remote". The remote backend
 * reads TGVAD_LLM_ENDPOINT, TGVAD_LLM_API_KEY and TGVAD_LLM_MODEL. */
tgvad_status tgvad_set_backend(tgvad_session* session, const char* kind);

/* Writes a synthetic dataset (manifest, features, captions, frame labels)
 * under out_dir. */
tgvad_status tgvad_synth(tgvad_session* session, const char* out_dir);

/* Stage-I: one labeled summary per training video, written as JSON lines. */
tgvad_status tgvad_msta_summarize(tgvad_session* session, const char* manifest_path,
                                  const char* out_path);

/* Stage-II: pseudo-labels every training caption against the summary pool. */
tgvad_status tgvad_msta_annotate(tgvad_session* session, const char* manifest_path,
                                 const char* summaries_path, const char* out_path);

/* Stage-III: generates anomaly descriptions from the annotated pool.
 * count < 0 balances the labeled pool (negatives minus positives);
 * summaries_path may be NULL (then balancing only counts annotated rows). */
tgvad_status tgvad_msta_generate(tgvad_session* session, const char* annotated_path,
                                 const char* summaries_path, int32_t count,
                                 const char* out_path);

/* Trains the caption anomaly head on every labeled sample found in the given
 * caption files and saves its parameters. trace_path may be NULL. */
tgvad_status tgvad_train_text_head(tgvad_session* session, const char* const* caption_paths,
                                   uint32_t caption_path_count, const char* head_out_path,
                                   const char* trace_path);

/* Trains the fusion network on the manifest's training split with the
 * session config and saves the model. trace_path may be NULL. */
tgvad_status tgvad_train(tgvad_session* session, const char* manifest_path,
                         const char* model_out_path, const char* trace_path);

/* Frame-level AUC and AP of a trained model on the manifest's test split.
 * text_head_path may be NULL (no blending; alpha is implicitly 1). Either
 * output pointer may be NULL. */
tgvad_status tgvad_eval(tgvad_session* session, const char* manifest_path,
                        const char* model_path, const char* text_head_path, double* out_auc,
                        double* out_ap);

/* Frame-level AUC and AP of precomputed score curves (s_hat column). */
tgvad_status tgvad_eval_scores(tgvad_session* session, const char* manifest_path,
                               const char* scores_csv_path, double* out_auc, double* out_ap);

/* Writes per-snippet score curves (video_id, snippet_index, s, p, s_hat)
 * for the test split as CSV. */
tgvad_status tgvad_score(tgvad_session* session, const char* manifest_path,
                         const char* model_path, const char* text_head_path,
                         const char* csv_out_path);

#ifdef __cplusplus
}
#endif

#endif /* TGVAD_H */
