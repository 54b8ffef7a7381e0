#ifndef TILELOC_H
#define TILELOC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible entry point.
typedef enum {
  TILELOC_OK = 0,
  TILELOC_NULL_ARGUMENT = 1,
  TILELOC_INVALID_ARGUMENT = 2,
  TILELOC_DATA_ERROR = 3,
  TILELOC_TRAIN_ERROR = 4,
  TILELOC_PREDICT_ERROR = 5,
  TILELOC_IO_ERROR = 6,
  TILELOC_INTERNAL_ERROR = 7,
} tileloc_status;

// Survey dataset handle.
typedef struct tileloc_dataset tileloc_dataset;

// Trained position-model handle.
typedef struct tileloc_model tileloc_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tileloc_version(void);

// Message for the calling thread's most recent failure. Valid until the
// next failing call on the same thread.
const char *tileloc_last_error(void);

// Load a dataset CSV (honoring its schema sidecar) into a new handle.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
tileloc_status tileloc_dataset_load(const char *path, tileloc_dataset **out);

// Survey a radio-environment JSON file into an in-memory dataset.
//
// # Safety
// `env_path` must be a NUL-terminated string; `out` must be valid.
tileloc_status tileloc_dataset_generate(const char *env_path,
                                        uint32_t spacing_tiles,
                                        uint64_t seed,
                                        tileloc_dataset **out);

// Number of labeled points; 0 for a null handle.
//
// # Safety
// `dataset` must be a live handle from this library or null.
size_t tileloc_dataset_len(const tileloc_dataset *dataset);

// Number of attribute columns; 0 for a null handle.
//
// # Safety
// `dataset` must be a live handle from this library or null.
size_t tileloc_dataset_attributes(const tileloc_dataset *dataset);

// Release a dataset handle (null is a no-op).
//
// # Safety
// `dataset` must be a handle from this library, not yet freed.
void tileloc_dataset_free(tileloc_dataset *dataset);

// Train a learner on a dataset. `learner` names the family as in the CLI:
// `kstar`, `knn`, `rbf`, `linear`, `zeror`, `forest`, `vote:<a>+<b>`,
// `hybrid`.
//
// # Safety
// `dataset` must be a live handle; `learner` a NUL-terminated string;
// `out` a valid pointer.
tileloc_status tileloc_train(const tileloc_dataset *dataset,
                             const char *learner,
                             uint64_t seed,
                             tileloc_model **out);

// Load a persisted model document (instance models re-derive their view
// from the referenced training data, verifying its content hash).
//
// # Safety
// `path` must be a NUL-terminated string; `out` a valid pointer.
tileloc_status tileloc_model_load(const char *path, tileloc_model **out);

// Persist a model. Instance-based families need the training dataset to
// have been loaded from a file (the document stores the reference).
//
// # Safety
// `model` must be a live handle; `path` a NUL-terminated string.
tileloc_status tileloc_model_save(const tileloc_model *model, const char *path);

// Predict a position fix from one fingerprint.
//
// `values` holds `len` attribute readings aligned to the training schema;
// `missing` (optional, may be null) marks out-of-range radios with
// non-zero bytes — such entries must hold the -100 dBm sentinel in
// `values`. Outputs are tile coordinates plus the number of candidate
// instances examined.
//
// # Safety
// `model` must be a live handle; `values` (and `missing` when non-null)
// must point to `len` readable elements; output pointers must be valid.
tileloc_status tileloc_predict(const tileloc_model *model,
                               const double *values,
                               const uint8_t *missing,
                               size_t len,
                               double *out_x,
                               double *out_y,
                               uint64_t *out_comparisons);

// Release a model handle (null is a no-op).
//
// # Safety
// `model` must be a handle from this library, not yet freed.
void tileloc_model_free(tileloc_model *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TILELOC_H */
