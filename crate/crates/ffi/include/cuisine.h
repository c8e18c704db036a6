#ifndef CUISINE_H
#define CUISINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum CuisineStatus {
  CUISINE_STATUS_OK = 0,
  // A required pointer argument was NULL.
  CUISINE_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  CUISINE_STATUS_INVALID_UTF8 = 2,
  // A file could not be opened.
  CUISINE_STATUS_NOT_FOUND = 3,
  // A file could be opened but not read or parsed.
  CUISINE_STATUS_IO = 4,
  // The vocabulary does not hash to what the model expects.
  CUISINE_STATUS_VOCAB_MISMATCH = 5,
  // Configuration or argument values out of range.
  CUISINE_STATUS_INVALID_ARGUMENT = 6,
  // An output buffer is shorter than the number of classes.
  CUISINE_STATUS_BUFFER_TOO_SMALL = 7,
  // Any other library error.
  CUISINE_STATUS_FAILURE = 8,
  // The library panicked; the handle involved should be freed.
  CUISINE_STATUS_PANIC = 9,
} CuisineStatus;

// Which part of a split manifest to evaluate on.
typedef enum CuisinePartition {
  CUISINE_PARTITION_TRAIN = 0,
  CUISINE_PARTITION_VALIDATION = 1,
  CUISINE_PARTITION_TEST = 2,
} CuisinePartition;

// Opaque handle to a loaded model.
typedef struct CuisinePredictor CuisinePredictor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cuisine_version(void);

// Message of the last failing call on this thread, or NULL if none. The
// pointer stays valid until the next failing call on this thread.
const char *cuisine_last_error(void);

// Load a model file and the vocabulary it references. With `vocab_path`
// NULL the vocabulary is found next to the model.
//
// # Safety
// `model_path` is a NUL-terminated string, `vocab_path` is NULL or one,
// and `out` points to writable storage for a handle pointer.
enum CuisineStatus cuisine_predictor_open_with_vocab(const char *model_path,
                                                     const char *vocab_path,
                                                     struct CuisinePredictor **out);

// `cuisine_predictor_open_with_vocab` with the model's own vocabulary.
//
// # Safety
// As for `cuisine_predictor_open_with_vocab`.
enum CuisineStatus cuisine_predictor_open(const char *model_path, struct CuisinePredictor **out);

// Release a handle. NULL is ignored.
//
// # Safety
// `p` is NULL or a handle from `cuisine_predictor_open*` not yet freed.
void cuisine_predictor_free(struct CuisinePredictor *p);

// Number of classes, or 0 for a NULL handle.
//
// # Safety
// `p` is NULL or a live handle.
size_t cuisine_predictor_n_classes(const struct CuisinePredictor *p);

// Name of class `index`, owned by the handle; NULL if out of range.
//
// # Safety
// `p` is NULL or a live handle.
const char *cuisine_predictor_label(const struct CuisinePredictor *p, size_t index);

// Classify one recipe given as `n_tokens` raw tokens (they are cleaned
// with the model's preprocessing). Writes the class index to `out_class`
// and, when non-NULL, the model's scores and probabilities to
// `out_scores` / `out_probs`, each of which must hold `capacity` ≥ the
// number of classes.
//
// # Safety
// `p` is a live handle; `tokens` points to `n_tokens` NUL-terminated
// strings (or is NULL when `n_tokens` is 0); `out_class` is writable;
// `out_scores` and `out_probs` are NULL or hold `capacity` doubles.
enum CuisineStatus cuisine_predict(const struct CuisinePredictor *p,
                                   const char *const *tokens,
                                   size_t n_tokens,
                                   size_t *out_class,
                                   double *out_scores,
                                   double *out_probs,
                                   size_t capacity);

// Score the model on one partition of a split manifest over the dataset
// at `data_path` (JSONL, or CSV when the path ends in `.csv`). Writes
// accuracy and mean cross-entropy.
//
// # Safety
// `p` is a live handle; the paths are NUL-terminated strings; the outputs
// are NULL or writable.
enum CuisineStatus cuisine_evaluate(const struct CuisinePredictor *p,
                                    const char *data_path,
                                    const char *split_path,
                                    enum CuisinePartition which,
                                    double *out_accuracy,
                                    double *out_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUISINE_H */
