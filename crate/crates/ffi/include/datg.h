#ifndef DATG_H
#define DATG_H

/* Generated by cbindgen from the datg-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum DatgStatus {
  DATG_OK = 0,
  // A pointer argument was null or a string was not valid UTF-8.
  DATG_INVALID_ARGUMENT = 1,
  // The config file failed to parse or validate.
  DATG_CONFIG_ERROR = 2,
  // A backend call failed (generation, classification, ranking).
  DATG_BACKEND_ERROR = 3,
  // The requested method or task name is unknown.
  DATG_UNKNOWN_NAME = 4,
  // A panic was caught at the boundary; state may be inconsistent.
  DATG_INTERNAL_ERROR = 5,
} DatgStatus;

// Opaque pipeline handle: validated config plus instantiated backends.
typedef struct DatgPipeline DatgPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message for the calling thread. The pointer stays valid until
// the next failing call on the same thread; never free it.
const char *datg_last_error(void);

// Crate version as a static NUL-terminated string; never free it.
const char *datg_version(void);

// Load and validate a pipeline from a TOML config file, instantiating the
// configured backends. On success `*out` owns the handle; release it with
// [`datg_pipeline_free`].
//
// # Safety
// `config_path` must be a NUL-terminated string and `out` a valid pointer.
enum DatgStatus datg_pipeline_new(const char *config_path, struct DatgPipeline **out);

// Release a pipeline handle. A null pointer is a no-op.
//
// # Safety
// `pipeline` must have come from [`datg_pipeline_new`] and not been freed.
void datg_pipeline_free(struct DatgPipeline *pipeline);

// Release a string returned through an out-parameter. Null is a no-op.
//
// # Safety
// `string` must have been returned by this library and not been freed.
void datg_string_free(char *string);

// Run stages 1-3 for a prompt and return the selected key tokens as JSON:
// `{"positive": [[token, rank], ...], "negative": [...]}`.
//
// # Safety
// All pointers must be valid; strings must be NUL-terminated.
enum DatgStatus datg_key_tokens_json(const struct DatgPipeline *pipeline,
                                     const char *prompt,
                                     char **out_json);

// Build the prefix prompt for a prompt (stages 1-3 plus the template).
//
// # Safety
// All pointers must be valid; strings must be NUL-terminated.
enum DatgStatus datg_prefix_prompt(const struct DatgPipeline *pipeline,
                                   const char *prompt,
                                   char **out_text);

// Generate one completion for `prompt` with `method` ("CONTINUATION",
// "INJECTION", "FUDGE", "PREADD", "DATG-L", "DATG-P") under `task`
// ("toxicity_mitigation", "sentiment_to_positive", "sentiment_to_negative").
//
// # Safety
// All pointers must be valid; strings must be NUL-terminated.
enum DatgStatus datg_generate(const struct DatgPipeline *pipeline,
                              const char *prompt,
                              const char *task,
                              const char *method,
                              char **out_text);

// Score a text with the pipeline's attribute classifier.
//
// # Safety
// All pointers must be valid; `text` must be NUL-terminated.
enum DatgStatus datg_classify(const struct DatgPipeline *pipeline,
                              const char *text,
                              double *out_score);

// Mean negative log-likelihood per token of `completion` given `prompt`
// under the pipeline's scorer; `exp` of it is the conditional perplexity.
//
// # Safety
// All pointers must be valid; strings must be NUL-terminated.
enum DatgStatus datg_score_sequence(const struct DatgPipeline *pipeline,
                                    const char *prompt,
                                    const char *completion,
                                    double *out_nll);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DATG_H */
