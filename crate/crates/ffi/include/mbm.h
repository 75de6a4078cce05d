#ifndef MBM_H
#define MBM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MbmStatus {
  MBM_STATUS_OK = 0,
  MBM_STATUS_INPUT = 1,
  MBM_STATUS_NUMERICAL = 2,
  MBM_STATUS_ASSUMPTION = 3,
  MBM_STATUS_NULL_POINTER = 4,
  MBM_STATUS_PANIC = 5,
} MbmStatus;

typedef enum MbmPriceMethod {
  MBM_PRICE_METHOD_FREQUENCY = 0,
  MBM_PRICE_METHOD_MARKET = 1,
} MbmPriceMethod;

typedef enum MbmUtilityFamily {
  MBM_UTILITY_FAMILY_LINEAR = 0,
  MBM_UTILITY_FAMILY_LOG = 1,
  MBM_UTILITY_FAMILY_POWER = 2,
  MBM_UTILITY_FAMILY_EXPONENTIAL = 3,
} MbmUtilityFamily;

/**
 * Opaque moment set.
 */
typedef struct MbmMomentSet MbmMomentSet;

/**
 * Opaque trade series.
 */
typedef struct MbmTickSeries MbmTickSeries;

/**
 * `parameter` is γ for power and α for exponential utility; ignored otherwise.
 */
typedef struct MbmUtility {
  enum MbmUtilityFamily family;
  double parameter;
} MbmUtility;

typedef struct MbmScenario {
  struct MbmUtility utility;
  double beta;
  double endowment_t;
  double endowment_terminal;
  double holdings;
  double payoff_mean;
  double payoff_variance;
  double price_variance;
  double dividend_mean;
} MbmScenario;

typedef struct MbmPriceSolution {
  double mean_price;
  double residual;
  uintptr_t iterations;
  bool converged;
} MbmPriceSolution;

/**
 * AR(1) log-price and log-normal volume simulation.
 */
typedef struct MbmSimSpec {
  uintptr_t length;
  uint64_t seed;
  double base_price;
  double persistence;
  double price_sigma;
  double median_volume;
  double volume_log_sigma;
  double pv_correlation;
} MbmSimSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mbm_last_error_message(void);

/**
 * Parses tick CSV text (`time,price,volume[,value]`).
 *
 * # Safety
 * `csv` must be a NUL-terminated string; `out` must be writable.
 */
enum MbmStatus mbm_series_parse(const char *csv, struct MbmTickSeries **out);

/**
 * # Safety
 * `series` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_series_len(const struct MbmTickSeries *series, uintptr_t *out);

/**
 * # Safety
 * `series` must be null or a handle not yet freed.
 */
void mbm_series_free(struct MbmTickSeries *series);

/**
 * Moment set of orders `1..=order` for ticks `start..start+len`.
 *
 * # Safety
 * `series` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_moment_set_compute(const struct MbmTickSeries *series,
                                      uintptr_t start,
                                      uintptr_t len,
                                      uint32_t order,
                                      enum MbmPriceMethod method,
                                      struct MbmMomentSet **out);

/**
 * # Safety
 * `set` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_moment_set_mean(const struct MbmMomentSet *set, double *out);

/**
 * May be negative for the market method.
 *
 * # Safety
 * `set` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_moment_set_variance(const struct MbmMomentSet *set, double *out);

/**
 * Raw moment of order `n`, `1 <= n <= order`.
 *
 * # Safety
 * `set` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_moment_set_raw(const struct MbmMomentSet *set, uint32_t n, double *out);

/**
 * Negative-variance and decorrelation flags.
 *
 * # Safety
 * `set` must be a live handle; both out pointers must be writable.
 */
enum MbmStatus mbm_moment_set_flags(const struct MbmMomentSet *set,
                                    bool *negative_variance,
                                    bool *decorrelation_flagged);

/**
 * JSON form of the set; release with [`mbm_string_free`].
 *
 * # Safety
 * `set` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_moment_set_to_json(const struct MbmMomentSet *set, char **out);

/**
 * # Safety
 * `set` must be null or a handle not yet freed.
 */
void mbm_moment_set_free(struct MbmMomentSet *set);

/**
 * Volume weighted average price of ticks `start..start+len`.
 *
 * # Safety
 * `series` must be a live handle; `out` must be writable.
 */
enum MbmStatus mbm_vwap(const struct MbmTickSeries *series,
                        uintptr_t start,
                        uintptr_t len,
                        double *out);

/**
 * Stochastic discount factor `β u'(c_terminal) / u'(c_t)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MbmStatus mbm_sdf(struct MbmUtility utility,
                       double beta,
                       double c_t,
                       double c_terminal,
                       double *out);

/**
 * Mean price for a single purchase and sale.
 *
 * # Safety
 * `scenario` must point to a valid struct; `out` must be writable.
 */
enum MbmStatus mbm_solve_price_single(const struct MbmScenario *scenario,
                                      struct MbmPriceSolution *out);

/**
 * Synthetic trade series.
 *
 * # Safety
 * `spec` must point to a valid struct; `out` must be writable.
 */
enum MbmStatus mbm_simulate(const struct MbmSimSpec *spec, struct MbmTickSeries **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void mbm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MBM_H */
