#ifndef LOANPROFIT_H
#define LOANPROFIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * A fitted one- or two-stage pipeline.
 */
typedef struct LpPipeline LpPipeline;

/**
 * A loaded or generated loan table.
 */
typedef struct LpTable LpTable;

/**
 * Status code returned by every fallible call.
 */
typedef int32_t LpStatus;

#define LP_OK 0

/**
 * Bad configuration or argument value.
 */
#define LP_ERR_USAGE 2

/**
 * Malformed data, schema mismatch or a numeric domain error.
 */
#define LP_ERR_DATA 3

#define LP_ERR_IO 4

/**
 * A required pointer argument was null.
 */
#define LP_ERR_NULL 5

/**
 * The library panicked; the handle involved should be discarded.
 */
#define LP_ERR_PANIC 6

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null if the last call succeeded.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lp_version(void);

/**
 * Annualized rate of return `(total_payment / principal)^(1/years)`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
LpStatus lp_compute_arr(double total_payment, double principal, double years, double *out);

/**
 * Loads expired loans from a CSV file with default column names.
 * Rows still in repayment are skipped; invalid rows are counted in
 * `rejected` when it is non-null.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
LpStatus lp_table_load_csv(const char *path, LpTable **out, size_t *rejected);

/**
 * Generates `n` synthetic loans with the default generator settings.
 *
 * # Safety
 * `out` must be writable.
 */
LpStatus lp_table_synthetic(size_t n, uint64_t seed, LpTable **out);

/**
 * Number of loans in a table, or 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t lp_table_len(const LpTable *table);

/**
 * # Safety
 * `table` must be null or a handle not yet freed.
 */
void lp_table_free(LpTable *table);

/**
 * Seeded train/test split.
 *
 * # Safety
 * `table` must be a live handle; `train` and `test` must be writable.
 */
LpStatus lp_table_split(const LpTable *table,
                        double train_fraction,
                        uint64_t seed,
                        LpTable **train,
                        LpTable **test);

/**
 * Fits a pipeline. `config` holds `key = value` lines as accepted by the
 * command line `--config` file and may be null for the defaults.
 *
 * # Safety
 * `train` must be a live handle, `config` null or NUL-terminated, `out` writable.
 */
LpStatus lp_pipeline_fit(const LpTable *train, const char *config, LpPipeline **out);

/**
 * Writes the pipeline artifacts into an existing directory.
 *
 * # Safety
 * `pipeline` must be a live handle and `dir` NUL-terminated.
 */
LpStatus lp_pipeline_save(const LpPipeline *pipeline, const char *dir);

/**
 * # Safety
 * `dir` must be NUL-terminated and `out` writable.
 */
LpStatus lp_pipeline_load(const char *dir, LpPipeline **out);

/**
 * Predicted ARR for every loan of `table`, in table order. `arr_out` must
 * hold `lp_table_len(table)` doubles. `pd_out` may be null; otherwise it
 * receives predicted default probabilities (NaN for one-stage pipelines).
 *
 * # Safety
 * Buffers must be valid for `lp_table_len(table)` writes.
 */
LpStatus lp_pipeline_score(const LpPipeline *pipeline,
                           const LpTable *table,
                           double *arr_out,
                           double *pd_out);

/**
 * Manifest text of a fitted pipeline. Release with [`lp_string_free`].
 *
 * # Safety
 * `pipeline` must be a live handle and `out` writable.
 */
LpStatus lp_pipeline_manifest(const LpPipeline *pipeline, char **out);

/**
 * # Safety
 * `pipeline` must be null or a handle not yet freed.
 */
void lp_pipeline_free(LpPipeline *pipeline);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void lp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOANPROFIT_H */
