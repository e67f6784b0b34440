/* C interface to the secgrid simulator library.
 *
 * All entry points return secgrid_status; on failure a thread-local message
 * is available via secgrid_last_error(). Returned const char* pointers are
 * owned by the handle they came from and stay valid until it is destroyed.
 */
#ifndef SECGRID_H
#define SECGRID_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum secgrid_status {
    SECGRID_OK = 0,
    SECGRID_ERR_INVALID_ARG = 1,
    SECGRID_ERR_CONFIG = 2,
    SECGRID_ERR_SCRIPT = 3,
    SECGRID_ERR_RUNTIME = 4,
} secgrid_status;

uint32_t secgrid_version(void);
const char* secgrid_last_error(void);

/* --- scenario runs ------------------------------------------------------ */

typedef struct secgrid_run secgrid_run; /* opaque */

/* config_text: key=value scenario config (NULL or "" = defaults).
 * script_text: adversary script (NULL or "" = honest run). */
secgrid_status secgrid_run_create(const char* config_text, const char* script_text, uint64_t seed,
                                  secgrid_run** out);
secgrid_status secgrid_run_execute(secgrid_run* run);
void secgrid_run_destroy(secgrid_run* run);

size_t secgrid_run_event_count(const secgrid_run* run);
const char* secgrid_run_event_line(const secgrid_run* run, size_t index);
const char* secgrid_run_summary_json(const secgrid_run* run);
uint64_t secgrid_run_accepted_count(const secgrid_run* run);
uint64_t secgrid_run_alarm_count(const secgrid_run* run);
uint64_t secgrid_run_aggregate_total(const secgrid_run* run);

/* --- benchmarks ---------------------------------------------------------- */

typedef struct secgrid_bench_row {
    char function[64];
    uint32_t users;
    char backend[16];
    double median_ms;
    double p95_ms;
    uint32_t iterations;
} secgrid_bench_row;

/* Fills up to *count rows; *count is set to the number produced. */
secgrid_status secgrid_bench(const char* function, uint32_t users, const char* backend,
                             uint32_t iterations, secgrid_bench_row* rows, size_t* count);
secgrid_status secgrid_transmit_bench(uint32_t users, uint32_t iterations, double* out_median_ms);

/* --- crypto test vectors -------------------------------------------------- */

/* Line-delimited JSON: the frozen AES-GCM / X25519 / Ed25519 known answers.
 * Static storage; never freed. */
const char* secgrid_crypto_vectors(void);

#ifdef __cplusplus
}
#endif

#endif /* SECGRID_H */
