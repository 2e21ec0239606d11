#ifndef CBCTSEG_H
#define CBCTSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CbctStatus {
  CBCT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CBCT_STATUS_NULL_POINTER = 1,
  /**
   * Bad value, shape mismatch or malformed input data.
   */
  CBCT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * File could not be read or written.
   */
  CBCT_STATUS_IO = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  CBCT_STATUS_INVALID_UTF8 = 4,
  /**
   * Internal panic caught at the boundary.
   */
  CBCT_STATUS_INTERNAL = 5,
} CbctStatus;

/**
 * Per-class removal cutoffs.
 */
typedef struct CbctCutoffTable CbctCutoffTable;

/**
 * Derived network topology.
 */
typedef struct CbctPlan CbctPlan;

/**
 * Label volume (u32 voxels, x fastest).
 */
typedef struct CbctVolume CbctVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cbct_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cbct_version(void);

/**
 * Copies `nx*ny*nz` labels from `data` into a new volume.
 *
 * # Safety
 * `data` must point to `nx*ny*nz` readable `uint32_t`; `out` must be writable.
 */
enum CbctStatus cbct_volume_new(size_t nx,
                                size_t ny,
                                size_t nz,
                                double sx,
                                double sy,
                                double sz,
                                const uint32_t *data,
                                struct CbctVolume **out);

/**
 * # Safety
 * `path` is a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CbctStatus cbct_volume_read(const char *path, struct CbctVolume **out);

/**
 * Writes the volume; a `.gz` suffix selects gzip.
 *
 * # Safety
 * `vol` comes from this library; `path` is a NUL-terminated UTF-8 string.
 */
enum CbctStatus cbct_volume_write(const struct CbctVolume *vol, const char *path);

/**
 * # Safety
 * `vol` is null or came from this library and has not been freed.
 */
void cbct_volume_free(struct CbctVolume *vol);

/**
 * # Safety
 * `vol` comes from this library; `dims` and `spacing` are null or hold 3 slots.
 */
enum CbctStatus cbct_volume_shape(const struct CbctVolume *vol, size_t *dims, double *spacing);

/**
 * Borrowed pointer to the voxel labels, valid while `vol` lives. Null when
 * `vol` is null. `len` (if non-null) receives the voxel count.
 *
 * # Safety
 * `vol` is null or came from this library.
 */
const uint32_t *cbct_volume_data(const struct CbctVolume *vol, size_t *len);

/**
 * Dice of one label; 1 when both volumes lack it.
 *
 * # Safety
 * Handles come from this library; `out` must be writable.
 */
enum CbctStatus cbct_dice(const struct CbctVolume *pred,
                          const struct CbctVolume *gt,
                          uint32_t label,
                          double *out);

/**
 * 95th-percentile Hausdorff distance in mm for one label. When exactly one
 * side is empty the result is `empty_penalty_mm`, or the image diagonal if
 * that argument is not positive.
 *
 * # Safety
 * Handles come from this library; `out` must be writable.
 */
enum CbctStatus cbct_hd95(const struct CbctVolume *pred,
                          const struct CbctVolume *gt,
                          uint32_t label,
                          double empty_penalty_mm,
                          double *out);

/**
 * # Safety
 * `path` is a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CbctStatus cbct_cutoffs_load(const char *path, struct CbctCutoffTable **out);

/**
 * # Safety
 * `json` is a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CbctStatus cbct_cutoffs_from_json(const char *json, struct CbctCutoffTable **out);

/**
 * # Safety
 * `table` is null or came from this library and has not been freed.
 */
void cbct_cutoffs_free(struct CbctCutoffTable *table);

/**
 * Removes objects below their class cutoff into a new volume.
 *
 * # Safety
 * Handles come from this library; `out` must be writable.
 */
enum CbctStatus cbct_apply_cutoffs(const struct CbctVolume *pred,
                                   const struct CbctCutoffTable *table,
                                   struct CbctVolume **out);

/**
 * Border-core encoding of an instance map.
 *
 * # Safety
 * `inst` comes from this library; `out` must be writable.
 */
enum CbctStatus cbct_bordercore_encode(const struct CbctVolume *inst,
                                       size_t border_width,
                                       struct CbctVolume **out);

/**
 * Instance recovery from a border-core map. `dropped_orphans` (if non-null)
 * receives the number of discarded core-less border components.
 *
 * # Safety
 * `bc` comes from this library; `out` must be writable.
 */
enum CbctStatus cbct_bordercore_decode(const struct CbctVolume *bc,
                                       uint64_t min_orphan_size,
                                       struct CbctVolume **out,
                                       uint32_t *dropped_orphans);

/**
 * Plans a topology for a patch size with default settings otherwise.
 *
 * # Safety
 * `out` must be writable.
 */
enum CbctStatus cbct_plan_new(size_t px, size_t py, size_t pz, struct CbctPlan **out);

/**
 * # Safety
 * `plan` comes from this library.
 */
size_t cbct_plan_n_stages(const struct CbctPlan *plan);

/**
 * Canonical JSON of the plan; release with `cbct_string_free`.
 *
 * # Safety
 * `plan` comes from this library; `out` must be writable.
 */
enum CbctStatus cbct_plan_to_json(const struct CbctPlan *plan, char **out);

/**
 * # Safety
 * `plan` is null or came from this library and has not been freed.
 */
void cbct_plan_free(struct CbctPlan *plan);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void cbct_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBCTSEG_H */
