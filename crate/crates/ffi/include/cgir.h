#ifndef CGIR_H
#define CGIR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgirStatus {
  CGIR_STATUS_OK = 0,
  CGIR_STATUS_NULL_ARGUMENT = 1,
  CGIR_STATUS_INVALID_UTF8 = 2,
  // Bad request or configuration, including malformed request JSON.
  CGIR_STATUS_USAGE = 3,
  CGIR_STATUS_NOT_FOUND = 4,
  // The attribute exists but none of its words had a vector.
  CGIR_STATUS_DROPPED_ATTRIBUTE = 5,
  // Unreadable or inconsistent input files.
  CGIR_STATUS_DATA = 6,
  CGIR_STATUS_CHECKPOINT = 7,
  CGIR_STATUS_NUMERICAL = 8,
  CGIR_STATUS_PANIC = 9,
} CgirStatus;

// Opaque handle to a loaded checkpoint.
typedef struct CgirModel CgirModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads the checkpoint directory at `checkpoint`. `oracle` may be null, an
// oracle file, or a data directory holding `oracle.tsv`; with an oracle,
// retrieval entries carry relevance maps.
//
// # Safety
// String arguments are null or NUL-terminated; `out` is a valid pointer.
enum CgirStatus cgir_model_open(const char *checkpoint, const char *oracle, struct CgirModel **out);

// Releases a handle from [`cgir_model_open`]. Null is ignored.
//
// # Safety
// `model` is null or a live handle not freed before.
void cgir_model_free(struct CgirModel *model);

// Number of items, or 0 for a null handle.
//
// # Safety
// `model` is null or a live handle.
size_t cgir_model_num_items(const struct CgirModel *model);

// Number of attributes, or 0 for a null handle.
//
// # Safety
// `model` is null or a live handle.
size_t cgir_model_num_attributes(const struct CgirModel *model);

// Latent dimension, or 0 for a null handle.
//
// # Safety
// `model` is null or a live handle.
size_t cgir_model_latent_dim(const struct CgirModel *model);

// Writes the external id of item `index` to `*out`.
//
// # Safety
// `model` is null or a live handle; `out` is a valid pointer.
enum CgirStatus cgir_model_item_id(const struct CgirModel *model, size_t index, char **out);

// Runs a retrieval. `request_json` has the service body shape
// `{"item_id", "attribute", "action", "gamma_start", "gamma_step", "steps", "top_k"}`;
// `*out_json` receives the gradient sequence JSON.
//
// # Safety
// `model` is null or a live handle; `request_json` is null or NUL-terminated;
// `out_json` is a valid pointer.
enum CgirStatus cgir_retrieve_json(const struct CgirModel *model,
                                   const char *request_json,
                                   char **out_json);

// Independence level of the item table.
//
// # Safety
// `model` is null or a live handle; `out` is a valid pointer.
enum CgirStatus cgir_independence_level(const struct CgirModel *model, double *out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` is null or a string from this library not freed before.
void cgir_string_free(char *s);

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *cgir_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGIR_H */
