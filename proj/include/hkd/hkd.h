/* hkd.h - C API of the holistic knowledge distillation library.
 *
 * All functions return hkd_status; on failure hkd_last_error() carries a
 * human-readable message for the calling thread. Strings returned through
 * out-parameters are heap-allocated and must be released with
 * hkd_string_free(). Manifests are opaque handles.
 */
#ifndef HKD_H
#define HKD_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hkd_status {
  HKD_OK = 0,
  HKD_ERR_INVALID_ARGUMENT = 1,
  HKD_ERR_CONFIG = 2,
  HKD_ERR_DATA = 3,
  HKD_ERR_NUMERICAL = 4,
  HKD_ERR_UNKNOWN = 5
} hkd_status;

typedef struct hkd_manifest hkd_manifest;

const char* hkd_version(void);

/* Message describing the most recent failure on this thread. */
const char* hkd_last_error(void);

void hkd_string_free(char* s);

/* --- manifests ---------------------------------------------------------- */

hkd_status hkd_manifest_create(const char* json_text, hkd_manifest** out);
hkd_status hkd_manifest_load_file(const char* path, hkd_manifest** out);

/* Dotted-path override with a JSON-encoded value, e.g.
 * ("distill.beta", "0.5") or ("dataset.name", "\"synthetic-clusters\""). */
hkd_status hkd_manifest_override(hkd_manifest* m, const char* dotted_key,
                                 const char* json_value);

/* 16 hex characters + NUL. */
hkd_status hkd_manifest_hash(const hkd_manifest* m, char buf[17]);
hkd_status hkd_manifest_dump(const hkd_manifest* m, char** json_out);
void hkd_manifest_destroy(hkd_manifest* m);

/* --- commands ------------------------------------------------------------
 * Each run command creates a timestamped directory under out_root, writes
 * manifest/metrics/checkpoints/tables there, and returns a JSON summary.
 */

hkd_status hkd_run_pretrain_teacher(const hkd_manifest* m, const char* out_root,
                                    int verbose, char** summary_json);

hkd_status hkd_run_distill(const hkd_manifest* m, const char* out_root,
                           int verbose, char** summary_json);

/* Re-evaluates a finished run directory; checkpoint may be NULL to use the
 * run's own final checkpoint. */
hkd_status hkd_run_evaluate(const char* run_dir, const char* checkpoint,
                            char** summary_json);

/* Linear-probe transfer of a frozen backbone onto the manifest's dataset. */
hkd_status hkd_run_transfer(const hkd_manifest* m, const char* checkpoint,
                            const char* out_root, char** summary_json);

/* Prediction-similarity heatmap of one checkpoint over a 32-instance batch. */
hkd_status hkd_run_heatmap(const hkd_manifest* m, const char* checkpoint,
                           const char* out_root, char** summary_json);

/* axis: "graph", "encoder", "objective" or "all". */
hkd_status hkd_run_ablate(const hkd_manifest* m, const char* axis,
                          const char* out_root, int verbose,
                          char** summary_json);

/* values_csv: comma-separated list, e.g. "2,4,8,16". */
hkd_status hkd_run_sweep(const hkd_manifest* m, const char* param,
                         const char* values_csv, const char* out_root,
                         int verbose, char** summary_json);

/* Computes the ARI column of an accuracy table (rows = methods, columns =
 * teacher/student pairs); returns CSV "method,ari_percent". hkd_row and
 * student_row may be NULL for the defaults "HKD+KD" and "Student". */
hkd_status hkd_ari_table(const char* csv_path, const char* hkd_row,
                         const char* student_row, char** csv_out);

hkd_status hkd_list_archs(char** json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HKD_H */
