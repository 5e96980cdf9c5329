#ifndef NILZETA_H
#define NILZETA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define NZ_OK 0

// Bad arguments, unknown group, malformed input.
#define NZ_ERR_USAGE 1

// Counts disagree, verification or consistency failure.
#define NZ_ERR_MISMATCH 2

#define NZ_ERR_BUDGET 3

// Unstable oracle or indeterminate computation.
#define NZ_ERR_INCONCLUSIVE 4

#define NZ_ERR_NULL 5

// The output buffer is too short; the required length is reported.
#define NZ_ERR_BUFFER 6

// A count does not fit in 64 bits.
#define NZ_ERR_OVERFLOW 7

#define NZ_ERR_PANIC 8

#define NZ_VARIANT_SUBGROUP 0

#define NZ_VARIANT_NORMAL 1

// Opaque handle to a loaded group.
typedef struct NzGroup NzGroup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load a group from a catalog name or a JSON file path.
//
// # Safety
// `spec` must be a NUL-terminated string and `out` a valid pointer.
int32_t nz_group_load(const char *spec, struct NzGroup **out);

// # Safety
// `g` must come from `nz_group_load` and not be used afterwards. Null is ignored.
void nz_group_free(struct NzGroup *g);

// Hirsch length of the lattice part, or 0 for a null handle.
//
// # Safety
// `g` must be null or a live handle.
size_t nz_group_hirsch_length(const struct NzGroup *g);

// Number of candidate subgroups `K` of the finite quotient for `variant`;
// `k_index` arguments below index this list.
//
// # Safety
// `g` must be a live handle and `out` a valid pointer.
int32_t nz_group_k_count(const struct NzGroup *g, int32_t variant_code, size_t *out);

// Local counts `a_{p^0}, ..., a_{p^kmax}` relative to the `k_index`-th
// subgroup `K`. `out` must hold `kmax + 1` entries; `written` (optional)
// receives the number of entries.
//
// # Safety
// `g` must be a live handle; `out` must point to `len` writable entries.
int32_t nz_local_counts(const struct NzGroup *g,
                        int32_t variant_code,
                        size_t k_index,
                        uint64_t p,
                        uint32_t kmax,
                        uint64_t *out,
                        size_t len,
                        size_t *written);

// Global coefficients `a_1, ..., a_nmax`.
//
// # Safety
// `g` must be a live handle; `out` must point to `len` writable entries.
int32_t nz_global_counts(const struct NzGroup *g,
                         int32_t variant_code,
                         uint64_t nmax,
                         uint64_t *out,
                         size_t len,
                         size_t *written);

// Canonical JSON of the cone condition system for the `k_index`-th `K`.
//
// # Safety
// `g` must be a live handle and `out` a valid pointer; free the result
// with `nz_string_free`.
int32_t nz_conditions_json(const struct NzGroup *g,
                           int32_t variant_code,
                           size_t k_index,
                           char **out);

// Cone and oracle counts for every `K` at prime `p`, as a JSON report.
// Returns `NZ_OK` when all agree and are stable, otherwise the status of
// the worst row (the report is still written).
//
// # Safety
// `g` must be a live handle and `out` a valid pointer; free the result
// with `nz_string_free`.
int32_t nz_oracle_compare_json(const struct NzGroup *g,
                               int32_t variant_code,
                               uint64_t p,
                               uint32_t kmax,
                               char **out);

// Copy of the last error message on this thread, or null if the last
// call succeeded. Free with `nz_string_free`.
char *nz_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void nz_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* NILZETA_H */
