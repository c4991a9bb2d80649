/* C interface for the seqevade black-box evasion toolkit. */

#ifndef SEQEVADE_H
#define SEQEVADE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum SeqevadeStatus {
  SeqevadeStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  SeqevadeStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SeqevadeStatus_InvalidUtf8 = 2,
  /**
   * JSON parsing or serialization failed.
   */
  SeqevadeStatus_Parse = 3,
  /**
   * Filesystem or corpus error.
   */
  SeqevadeStatus_Io = 4,
  /**
   * Training or classification failed.
   */
  SeqevadeStatus_Model = 5,
  /**
   * The attack rejected its configuration or failed mid-run.
   */
  SeqevadeStatus_Attack = 6,
  /**
   * An index or enum value was out of range.
   */
  SeqevadeStatus_OutOfRange = 7,
  /**
   * The caller's buffer is too small; nothing was written.
   */
  SeqevadeStatus_BufferTooSmall = 8,
} SeqevadeStatus;

/**
 * A generated or loaded corpus: traces, static vectors, vocabulary.
 */
typedef struct SeqevadeCorpus SeqevadeCorpus;

/**
 * A trained windowed classifier plus the vocabulary it was trained against.
 */
typedef struct SeqevadeModel SeqevadeModel;

/**
 * Result of one full-sequence attack.
 */
typedef struct SeqevadeOutcome SeqevadeOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread; empty string if none.
 * The pointer is invalidated by the next failing call on the same thread.
 */
const char *seqevade_last_error(void);

/**
 * Generates a corpus from a JSON spec; pass NULL for the built-in default
 * spec. On success `*out` owns the corpus.
 *
 * # Safety
 * `spec_json` must be NULL or a valid C string; `out` must be valid.
 */
enum SeqevadeStatus seqevade_corpus_generate(const char *spec_json, struct SeqevadeCorpus **out);

/**
 * Loads a corpus directory written by `seqevade_corpus_save`.
 *
 * # Safety
 * `dir` must be a valid C string; `out` must be valid.
 */
enum SeqevadeStatus seqevade_corpus_load(const char *dir, struct SeqevadeCorpus **out);

/**
 * # Safety
 * `corpus` must be a live handle; `dir` a valid C string.
 */
enum SeqevadeStatus seqevade_corpus_save(const struct SeqevadeCorpus *corpus, const char *dir);

/**
 * Number of traces in the corpus; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
uintptr_t seqevade_corpus_len(const struct SeqevadeCorpus *corpus);

/**
 * # Safety
 * `corpus` must be NULL or an owned handle; it is invalid afterwards.
 */
void seqevade_corpus_free(struct SeqevadeCorpus *corpus);

/**
 * Trains a classifier on the corpus. `kind`: 0 logistic regression,
 * 1 n-gram Bayes, 2 decision forest. `window` is the model's window size.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be valid.
 */
enum SeqevadeStatus seqevade_model_train(const struct SeqevadeCorpus *corpus,
                                         uint32_t kind,
                                         uintptr_t window,
                                         uint64_t seed,
                                         struct SeqevadeModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a valid C string.
 */
enum SeqevadeStatus seqevade_model_save(const struct SeqevadeModel *model, const char *path);

/**
 * Loads a model file; the corpus supplies the vocabulary it is checked
 * against.
 *
 * # Safety
 * `path` must be a valid C string; `corpus` a live handle; `out` valid.
 */
enum SeqevadeStatus seqevade_model_load(const char *path,
                                        const struct SeqevadeCorpus *corpus,
                                        struct SeqevadeModel **out);

/**
 * Classifies a token sequence. Writes 1 to `*out_malicious` for a malicious
 * verdict, 0 otherwise, and the confidence score to `*out_score` (pass NULL
 * to skip the score).
 *
 * # Safety
 * `model` must be a live handle; `tokens` must point to `len` u32 values.
 */
enum SeqevadeStatus seqevade_model_classify(const struct SeqevadeModel *model,
                                            const uint32_t *tokens,
                                            uintptr_t len,
                                            int32_t *out_malicious,
                                            double *out_score);

/**
 * # Safety
 * `model` must be NULL or an owned handle; it is invalid afterwards.
 */
void seqevade_model_free(struct SeqevadeModel *model);

/**
 * Attacks corpus trace `index` against the model. `config_json` configures
 * the attack (same schema as the library's attack config; NULL for
 * defaults). Benign perturbation draws from the corpus's benign class.
 *
 * # Safety
 * `model` and `corpus` must be live handles; `config_json` NULL or a valid
 * C string; `out` valid.
 */
enum SeqevadeStatus seqevade_attack_run(const struct SeqevadeModel *model,
                                        const struct SeqevadeCorpus *corpus,
                                        uintptr_t index,
                                        const char *config_json,
                                        struct SeqevadeOutcome **out);

/**
 * 1 if every window of the perturbed trace classifies benign.
 *
 * # Safety
 * `outcome` must be NULL or a live handle.
 */
int32_t seqevade_outcome_evaded(const struct SeqevadeOutcome *outcome);

/**
 * # Safety
 * `outcome` must be NULL or a live handle.
 */
uint64_t seqevade_outcome_queries(const struct SeqevadeOutcome *outcome);

/**
 * Added calls over original length, in [0, 1].
 *
 * # Safety
 * `outcome` must be NULL or a live handle.
 */
double seqevade_outcome_overhead(const struct SeqevadeOutcome *outcome);

/**
 * Length of the perturbed trace in tokens.
 *
 * # Safety
 * `outcome` must be NULL or a live handle.
 */
uintptr_t seqevade_outcome_trace_len(const struct SeqevadeOutcome *outcome);

/**
 * Copies the perturbed trace's token ids into `buf` (capacity `cap`).
 *
 * # Safety
 * `outcome` must be a live handle; `buf` must point to `cap` u32 slots.
 */
enum SeqevadeStatus seqevade_outcome_trace(const struct SeqevadeOutcome *outcome,
                                           uint32_t *buf,
                                           uintptr_t cap);

/**
 * # Safety
 * `outcome` must be NULL or an owned handle; it is invalid afterwards.
 */
void seqevade_outcome_free(struct SeqevadeOutcome *outcome);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SEQEVADE_H */
