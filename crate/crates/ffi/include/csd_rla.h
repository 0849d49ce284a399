#ifndef CSD_RLA_H
#define CSD_RLA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum RlaStatus {
  RLA_STATUS_OK = 0,
  RLA_STATUS_NULL_POINTER = 1,
  RLA_STATUS_INVALID_UTF8 = 2,
  RLA_STATUS_INVALID_ARGUMENT = 3,
  RLA_STATUS_VALIDATION = 4,
  RLA_STATUS_FATAL = 5,
  RLA_STATUS_RUNTIME = 6,
  RLA_STATUS_PANIC = 7,
} RlaStatus;

// Opaque risk-measurement state for one assertion.
typedef struct RlaAlpha RlaAlpha;

// Opaque read-only view of a stored audit.
typedef struct RlaAudit RlaAudit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy of the last error message on this thread, or null when the last
// call succeeded. Release with [`rla_string_free`].
char *rla_last_error(void);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a pointer returned by this library, not yet freed.
void rla_string_free(char *s);

// Alternative mean that maximises expected log growth for a comparison
// audit with margin `margin`, assorter bound `upper` and overstatement rates
// `p1`, `p2`.
//
// # Safety
// `out` must be a valid pointer to a double.
enum RlaStatus rla_optimal_eta(double margin, double upper, double p1, double p2, double *out);

// Cards to draw before the risk falls to `alpha`, assuming one-vote
// overstatements at rate `p1` and two-vote overstatements at rate `p2`,
// the first draw carrying an error.
//
// # Safety
// `out` must be a valid pointer.
enum RlaStatus rla_estimate_sample_size(uint64_t population,
                                        double margin,
                                        double upper,
                                        double alpha,
                                        double p1,
                                        double p2,
                                        double eta,
                                        uint64_t *out);

// Overstatement assorter value for overstatement `omega`.
//
// # Safety
// `out` must be a valid pointer.
enum RlaStatus rla_overstatement_assorter(double omega, double margin, double upper, double *out);

// Sample number of `card_id` under `seed`, as 64 hex digits.
//
// # Safety
// `seed` and `card_id` must be NUL-terminated strings; `out` a valid pointer.
enum RlaStatus rla_sample_number(const char *seed, const char *card_id, char **out);

// New comparison-audit risk state over `population` cards.
//
// # Safety
// `out` must be a valid pointer.
enum RlaStatus rla_alpha_new(uint64_t population, double upper, double eta, struct RlaAlpha **out);

// Feed one observation. The state is unchanged on error.
//
// # Safety
// `handle` must come from [`rla_alpha_new`] and not be freed.
enum RlaStatus rla_alpha_step(struct RlaAlpha *handle, double x);

// Current p-value and number of observations so far.
//
// # Safety
// `handle` must be live; `p_value` and `drawn` valid pointers.
enum RlaStatus rla_alpha_p_value(const struct RlaAlpha *handle, double *p_value, uint64_t *drawn);

// # Safety
// `handle` must be null or a live handle from [`rla_alpha_new`].
void rla_alpha_free(struct RlaAlpha *handle);

// Load the audit stored in `state_dir` for reading. Does not take the
// directory lock.
//
// # Safety
// `state_dir` must be a NUL-terminated string; `out` a valid pointer.
enum RlaStatus rla_audit_open(const char *state_dir, struct RlaAudit **out);

// Audit report as JSON. A negative `threshold` leaves out the workload
// total above a margin threshold.
//
// # Safety
// `handle` must be live; `out` a valid pointer.
enum RlaStatus rla_audit_report_json(const struct RlaAudit *handle, double threshold, char **out);

// # Safety
// `handle` must be null or a live handle from [`rla_audit_open`].
void rla_audit_free(struct RlaAudit *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSD_RLA_H */
