#ifndef THERMOTIER_H
#define THERMOTIER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TtStatus {
  TT_STATUS_OK = 0,
  TT_STATUS_NULL_POINTER = 1,
  TT_STATUS_INVALID_ARGUMENT = 2,
  TT_STATUS_CONTRACT = 3,
  TT_STATUS_ENCODING = 4,
  TT_STATUS_CONFIG = 5,
  TT_STATUS_TRAINING = 6,
  TT_STATUS_PLANNING = 7,
  TT_STATUS_CONFLICT = 8,
  TT_STATUS_IO = 9,
  TT_STATUS_BUFFER_TOO_SMALL = 10,
  TT_STATUS_PANIC = 11,
} TtStatus;

/**
 * Frequent-bucket counter table.
 */
typedef struct TtCounterTable TtCounterTable;

/**
 * Dataset and workload prepared from one configuration.
 */
typedef struct TtExperiment TtExperiment;

/**
 * Fitted linear + LSTM ensemble.
 */
typedef struct TtForecaster TtForecaster;

typedef struct TtTemperatureParams {
  /**
   * Per second.
   */
  double cooling_rate;
  double heating_rate;
  double heat_source;
  /**
   * Seconds.
   */
  int64_t window;
} TtTemperatureParams;

typedef struct TtTemperatureRecord {
  int64_t last_query_ts;
  double temperature;
  uint32_t pending_accesses;
  bool tracked;
} TtTemperatureRecord;

typedef struct TtRunSummary {
  uint64_t capacity;
  uint64_t queries;
  uint64_t hits;
  uint64_t misses;
  uint64_t preheat_actions;
  uint64_t demote_actions;
  uint64_t summarize_actions;
  uint64_t forecast_calls;
  uint64_t frequent_calls;
  double hit_rate;
} TtRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on the calling thread, or null if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *tt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tt_version(void);

struct TtTemperatureParams tt_temperature_params_default(void);

/**
 * Fresh record for data inserted at `now`.
 */
enum TtStatus tt_record_init(int64_t now,
                             const struct TtTemperatureParams *params_,
                             struct TtTemperatureRecord *out);

/**
 * Counts one access in place.
 */
enum TtStatus tt_record_access(struct TtTemperatureRecord *record);

/**
 * Closes the window ending at `now` in place; the record is unchanged on
 * failure.
 */
enum TtStatus tt_record_update(struct TtTemperatureRecord *record,
                               int64_t now,
                               const struct TtTemperatureParams *params_);

enum TtStatus tt_heat_increment(double heat_source,
                                uint32_t accesses,
                                double delta,
                                double heating_rate,
                                double *out);

/**
 * Size of an encoded record in bytes.
 */
size_t tt_record_encoded_len(void);

/**
 * Writes the 8-byte big-endian encoding to `out`, which must hold
 * `tt_record_encoded_len()` bytes.
 */
enum TtStatus tt_record_encode(const struct TtTemperatureRecord *record,
                               uint8_t *out,
                               size_t out_len);

enum TtStatus tt_record_decode(const uint8_t *bytes, size_t len, struct TtTemperatureRecord *out);

/**
 * Unconstrained DTW distance with absolute-difference cost.
 */
enum TtStatus tt_dtw_distance(const double *a,
                              size_t a_len,
                              const double *b,
                              size_t b_len,
                              double *out);

/**
 * New table holding at most `capacity - 1` counters.
 */
enum TtStatus tt_counter_table_new(size_t capacity, struct TtCounterTable **out);

void tt_counter_table_free(struct TtCounterTable *table);

enum TtStatus tt_counter_table_process(struct TtCounterTable *table, int64_t element);

/**
 * Counter of `bucket`, zero when it holds none.
 */
enum TtStatus tt_counter_table_counter(const struct TtCounterTable *table,
                                       int64_t bucket,
                                       uint64_t *out);

/**
 * Number of live counters; 0 for a null table.
 */
size_t tt_counter_table_len(const struct TtCounterTable *table);

/**
 * Elements processed so far; 0 for a null table.
 */
uint64_t tt_counter_table_processed(const struct TtCounterTable *table);

/**
 * Fits an ensemble on `history`. `epochs` of 0 selects the default.
 */
enum TtStatus tt_forecaster_fit(const double *history,
                                size_t len,
                                size_t lag,
                                size_t hidden,
                                size_t epochs,
                                uint64_t seed,
                                struct TtForecaster **out);

/**
 * Restores a forecaster from [`tt_forecaster_snapshot`] text.
 */
enum TtStatus tt_forecaster_from_snapshot(const char *text, struct TtForecaster **out);

void tt_forecaster_free(struct TtForecaster *forecaster);

/**
 * Writes `steps` predictions following `history` to `out`.
 */
enum TtStatus tt_forecaster_predict(const struct TtForecaster *forecaster,
                                    const double *history,
                                    size_t len,
                                    size_t steps,
                                    double *out,
                                    size_t out_len);

/**
 * Member weights `(linear, lstm)`.
 */
enum TtStatus tt_forecaster_weights(const struct TtForecaster *forecaster,
                                    double *w_linear,
                                    double *w_lstm);

/**
 * Copies the NUL-terminated snapshot text into `buf`. `required` receives
 * the buffer size needed, NUL included; with a short buffer the call returns
 * `TT_STATUS_BUFFER_TOO_SMALL` and writes nothing else.
 */
enum TtStatus tt_forecaster_snapshot(const struct TtForecaster *forecaster,
                                     char *buf,
                                     size_t buf_len,
                                     size_t *required);

/**
 * Builds the dataset and workload from `key = value` configuration text;
 * null text selects the defaults.
 */
enum TtStatus tt_experiment_new(const char *config_text, struct TtExperiment **out);

void tt_experiment_free(struct TtExperiment *experiment);

/**
 * Points in the experiment's dataset; 0 for a null handle.
 */
uint64_t tt_experiment_dataset_points(const struct TtExperiment *experiment);

/**
 * Simulates `policy` (TSCABINET, TSCABINET_NO_FORECAST, TITLE or LRU) with
 * `capacity` points across both tiers; a capacity of 0 selects the
 * configured default.
 */
enum TtStatus tt_experiment_run(const struct TtExperiment *experiment,
                                const char *policy,
                                uint64_t capacity,
                                struct TtRunSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THERMOTIER_H */
