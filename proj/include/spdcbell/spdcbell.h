#ifndef SPDCBELL_SPDCBELL_H
#define SPDCBELL_SPDCBELL_H

/* C interface to the spdcbell library.
 *
 * Every function returns a spdcbell_status. On failure the message of the
 * most recent error on the calling thread is available from
 * spdcbell_last_error(). Output arguments are left untouched on failure.
 *
 * Mode and detector conventions: detectors D1..D4 observe H_A, H_B, V_A, V_B.
 * Click patterns are indexed 0..15 as sum over detectors l of b_l * 2^(l-1).
 * Setting indices are 0-based here (0 = first angle of a party). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SPDCBELL_BUILDING_LIBRARY)
#    define SPDCBELL_API __declspec(dllexport)
#  else
#    define SPDCBELL_API __declspec(dllimport)
#  endif
#else
#  define SPDCBELL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum spdcbell_status {
  SPDCBELL_OK = 0,
  SPDCBELL_ERR_INVALID_ARGUMENT = 1,
  SPDCBELL_ERR_INVALID_STATE = 2,
  SPDCBELL_ERR_NUMERICAL = 3,
  SPDCBELL_ERR_IO = 4,
  SPDCBELL_ERR_INTERNAL = 5
} spdcbell_status;

#define SPDCBELL_PATTERNS 16
#define SPDCBELL_DETECTORS 4

SPDCBELL_API const char* spdcbell_version(void);
/* Thread-local; empty string when no error has occurred. */
SPDCBELL_API const char* spdcbell_last_error(void);
SPDCBELL_API const char* spdcbell_status_name(spdcbell_status status);

/* ---- system configuration ---------------------------------------------- */

typedef struct spdcbell_config spdcbell_config;

typedef struct spdcbell_config_values {
  double lambda1;
  double lambda2;
  double alice_angles[2];
  double bob_angles[2];
  double efficiency[SPDCBELL_DETECTORS]; /* eta_1..eta_4 */
  double dark_count;
} spdcbell_config_values;

/* New configuration: vacuum sources, zero angles, unit efficiency, no dark
 * counts. */
SPDCBELL_API spdcbell_status spdcbell_config_create(spdcbell_config** out);
SPDCBELL_API void spdcbell_config_destroy(spdcbell_config* config);
/* Validates before storing; the configuration is unchanged on failure. */
SPDCBELL_API spdcbell_status spdcbell_config_set(spdcbell_config* config,
                                                 const spdcbell_config_values* values);
SPDCBELL_API spdcbell_status spdcbell_config_get(const spdcbell_config* config,
                                                 spdcbell_config_values* out);

/* ---- CHSH -------------------------------------------------------------- */

/* Outcome (+1 or -1) for each local event, indexed by
 * (primary click) + 2 * (secondary click). Alice's primary detector is D1,
 * Bob's is D2. */
typedef struct spdcbell_assignment {
  int alice[4];
  int bob[4];
} spdcbell_assignment;

SPDCBELL_API void spdcbell_assignment_standard(spdcbell_assignment* out);

typedef struct spdcbell_chsh_report {
  double correlator[2][2]; /* [alice setting][bob setting] */
  double s;
  double distributions[2][2][SPDCBELL_PATTERNS];
} spdcbell_chsh_report;

/* assignment may be NULL for the standard rule. */
SPDCBELL_API spdcbell_status spdcbell_chsh(const spdcbell_config* config,
                                           const spdcbell_assignment* assignment,
                                           spdcbell_chsh_report* out);

SPDCBELL_API spdcbell_status spdcbell_click_distribution(const spdcbell_config* config,
                                                         int alice_setting, int bob_setting,
                                                         double out[SPDCBELL_PATTERNS]);

/* Photon-number-basis cross-check. cutoff <= 0 selects the default for the
 * configured lambdas. tail_deficit and cutoff_used may be NULL. */
SPDCBELL_API spdcbell_status spdcbell_oracle_click_distribution(
    const spdcbell_config* config, int alice_setting, int bob_setting, int cutoff,
    double out[SPDCBELL_PATTERNS], double* tail_deficit, int* cutoff_used);

/* ---- optimization ------------------------------------------------------ */

typedef struct spdcbell_search_options {
  int restarts;
  uint64_t seed;
  double initial_step;
  double x_tolerance;
  double f_tolerance;
  int max_iterations;
  double lambda_ceiling;
} spdcbell_search_options;

SPDCBELL_API void spdcbell_search_options_default(spdcbell_search_options* out);

typedef struct spdcbell_optimum {
  double s;
  double lambda1;
  double lambda2;
  double alice_angles[2];
  double bob_angles[2];
  int iterations;
  int evaluations;
  int converged;
  int best_restart;
} spdcbell_optimum;

/* Use a negative or infinite cap for no cap. options may be NULL. */
SPDCBELL_API spdcbell_status spdcbell_maximize_at_lambda(double lambda, double eta, double nu,
                                                         const spdcbell_search_options* options,
                                                         spdcbell_optimum* out);
SPDCBELL_API spdcbell_status spdcbell_maximize_at_eta(double eta, double lambda_cap, double nu,
                                                      const spdcbell_search_options* options,
                                                      spdcbell_optimum* out);

typedef struct spdcbell_scan spdcbell_scan;

typedef struct spdcbell_scan_row {
  double lambda;
  double eta;
  double lambda_cap; /* +inf when uncapped */
  int ok;            /* 0 when the row failed; see spdcbell_scan_row_error */
  spdcbell_optimum result;
} spdcbell_scan_row;

SPDCBELL_API spdcbell_status spdcbell_scan_lambda(const double* lambdas, size_t count, double eta,
                                                  double nu, const spdcbell_search_options* options,
                                                  int jobs, spdcbell_scan** out);
SPDCBELL_API spdcbell_status spdcbell_scan_eta(const double* etas, size_t count, double lambda_cap,
                                               double nu, const spdcbell_search_options* options,
                                               int jobs, spdcbell_scan** out);
SPDCBELL_API size_t spdcbell_scan_size(const spdcbell_scan* scan);
SPDCBELL_API spdcbell_status spdcbell_scan_row_get(const spdcbell_scan* scan, size_t index,
                                                   spdcbell_scan_row* out);
/* Empty string for rows that succeeded. Owned by the scan. */
SPDCBELL_API const char* spdcbell_scan_row_error(const spdcbell_scan* scan, size_t index);
SPDCBELL_API void spdcbell_scan_destroy(spdcbell_scan* scan);

/* Inclusive grid min, min + step, ..., max. Writes at most capacity values
 * and stores the full grid size in count. */
SPDCBELL_API spdcbell_status spdcbell_make_grid(double min, double max, double step,
                                                double* values, size_t capacity, size_t* count);

/* ---- estimation -------------------------------------------------------- */

SPDCBELL_API spdcbell_status spdcbell_klyshko(double coincidences, double singles_first,
                                              double singles_second, double* eta_first,
                                              double* eta_second);
SPDCBELL_API spdcbell_status spdcbell_lambda_from_singles(double singles_fraction, double eta,
                                                          double* lambda);
/* Row-major 16x16, row = observed pattern, column = ideal pattern. */
SPDCBELL_API spdcbell_status spdcbell_transmission_matrix(
    const double efficiency[SPDCBELL_DETECTORS],
    double out[SPDCBELL_PATTERNS * SPDCBELL_PATTERNS]);

typedef struct spdcbell_compensation {
  double q[SPDCBELL_PATTERNS];
  double residual;
  double kkt_residual;
  int active[SPDCBELL_PATTERNS];
  int iterations;
  int ill_conditioned;
  double condition_estimate;
} spdcbell_compensation;

SPDCBELL_API spdcbell_status spdcbell_compensate(const double p[SPDCBELL_PATTERNS],
                                                 const double efficiency[SPDCBELL_DETECTORS],
                                                 spdcbell_compensation* out);

/* Counting data: one record per setting id 11, 12, 21, 22. */
typedef struct spdcbell_counts spdcbell_counts;

SPDCBELL_API spdcbell_status spdcbell_counts_create(spdcbell_counts** out);
SPDCBELL_API void spdcbell_counts_destroy(spdcbell_counts* counts);
/* Adds or replaces the record of `setting`. */
SPDCBELL_API spdcbell_status spdcbell_counts_set(spdcbell_counts* counts, int setting,
                                                 const uint64_t pattern_counts[SPDCBELL_PATTERNS],
                                                 uint64_t total);
/* Parses the counts CSV format (see README). Errors name the line. */
SPDCBELL_API spdcbell_status spdcbell_counts_parse_csv(const char* text, spdcbell_counts** out);
SPDCBELL_API spdcbell_status spdcbell_counts_load_csv(const char* path, spdcbell_counts** out);
/* Writes the CSV text; the returned buffer is freed with spdcbell_free. */
SPDCBELL_API spdcbell_status spdcbell_counts_to_csv(const spdcbell_counts* counts, char** out);
SPDCBELL_API void spdcbell_free(void* buffer);
/* Setting ids in ascending order; returns how many are present. */
SPDCBELL_API size_t spdcbell_counts_settings(const spdcbell_counts* counts, int settings[4]);
SPDCBELL_API spdcbell_status spdcbell_counts_get(const spdcbell_counts* counts, int setting,
                                                 uint64_t pattern_counts[SPDCBELL_PATTERNS],
                                                 uint64_t* total);

typedef struct spdcbell_pair_counts {
  uint64_t singles_first;
  uint64_t singles_second;
  uint64_t coincidences;
  uint64_t total;
} spdcbell_pair_counts;

/* Detectors are 1-based (D1..D4). */
SPDCBELL_API spdcbell_status spdcbell_counts_pair(const spdcbell_counts* counts, int setting,
                                                  int first_detector, int second_detector,
                                                  spdcbell_pair_counts* out);
SPDCBELL_API spdcbell_status spdcbell_empirical_distribution(const spdcbell_counts* counts,
                                                             int setting,
                                                             double p[SPDCBELL_PATTERNS],
                                                             double standard_error[SPDCBELL_PATTERNS]);

/* Expected counts (largest-remainder rounding) or, with sample != 0, a seeded
 * multinomial draw of `trials` events from the configuration's four click
 * distributions. */
SPDCBELL_API spdcbell_status spdcbell_synthesize_counts(const spdcbell_config* config,
                                                        uint64_t trials, int sample,
                                                        uint64_t seed, spdcbell_counts** out);

typedef struct spdcbell_compensated_report {
  spdcbell_chsh_report report; /* from the compensated distributions */
  spdcbell_compensation per_setting[2][2];
  int outside_validity;
} spdcbell_compensated_report;

SPDCBELL_API spdcbell_status spdcbell_compensated_chsh(const spdcbell_counts* counts,
                                                       const double efficiency[SPDCBELL_DETECTORS],
                                                       const spdcbell_assignment* assignment,
                                                       spdcbell_compensated_report* out);
SPDCBELL_API spdcbell_status spdcbell_empirical_chsh(const spdcbell_counts* counts,
                                                     const spdcbell_assignment* assignment,
                                                     spdcbell_chsh_report* out);
SPDCBELL_API spdcbell_status spdcbell_bootstrap_compensated_chsh(
    const spdcbell_counts* counts, const double efficiency[SPDCBELL_DETECTORS], int resamples,
    uint64_t seed, const spdcbell_assignment* assignment, int jobs, double* mean,
    double* standard_error);

#ifdef __cplusplus
}
#endif

#endif /* SPDCBELL_SPDCBELL_H */
