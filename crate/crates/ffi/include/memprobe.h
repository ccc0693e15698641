#ifndef MEMPROBE_H
#define MEMPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpStatus {
  MP_STATUS_OK = 0,
  MP_STATUS_NULL_POINTER = 1,
  MP_STATUS_INVALID_ARGUMENT = 2,
  MP_STATUS_DIMENSION_MISMATCH = 3,
  MP_STATUS_DIVERGED = 4,
  MP_STATUS_SINGULAR = 5,
  MP_STATUS_IO = 6,
  MP_STATUS_PARSE = 7,
  MP_STATUS_PANIC = 8,
} MpStatus;

typedef enum MpCellKind {
  MP_CELL_KIND_RNN = 0,
  MP_CELL_KIND_LSTM = 1,
  MP_CELL_KIND_GRU = 2,
} MpCellKind;

typedef enum MpTaskKind {
  MP_TASK_KIND_RANDOM = 0,
  MP_TASK_KIND_FIXED = 1,
  MP_TASK_KIND_CORRELATED = 2,
} MpTaskKind;

// Opaque stacked recurrent network.
typedef struct MpNet MpNet;

// Opaque Mersenne Twister generator.
typedef struct MpPrng MpPrng;

// Training hyperparameters. `truncation = 0` means full BPTT.
typedef struct MpTrainConfig {
  double learning_rate;
  size_t episodes_per_epoch;
  size_t max_epochs;
  size_t eval_episodes;
  size_t eval_every;
  double early_stop_mae;
  uint32_t seed;
  size_t truncation;
} MpTrainConfig;

typedef struct MpTrainSummary {
  double final_eval_mae;
  double best_eval_mae;
  size_t epochs_run;
  bool diverged;
  uint64_t wall_ms;
} MpTrainSummary;

// Reservoir settings. `max_delay = 0` means `2 * neurons`.
typedef struct MpEsnConfig {
  size_t neurons;
  double connectivity;
  double spectral_radius;
  double input_scaling;
  double ridge_lambda;
  size_t washout;
  size_t stream_len;
  size_t max_delay;
  uint32_t seed;
} MpEsnConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message (NUL-terminated,
// truncated to `len`) into `buf` and returns the full message length
// excluding the terminator. Pass `buf = NULL` to query the length.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t mp_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *mp_version(void);

// # Safety
// `out` must be valid for writes.
enum MpStatus mp_prng_new(uint32_t seed, struct MpPrng **out);

// # Safety
// `prng` must be null or a handle from [`mp_prng_new`] not yet freed.
void mp_prng_free(struct MpPrng *prng);

// # Safety
// `prng` must be a live handle and `out` valid for writes.
enum MpStatus mp_prng_next_u32(struct MpPrng *prng, uint32_t *out);

// Uniform on `[0, 1)` with 53-bit resolution.
//
// # Safety
// `prng` must be a live handle and `out` valid for writes.
enum MpStatus mp_prng_next_f64(struct MpPrng *prng, double *out);

// Uniform on `[a, b)`; requires `a < b`.
//
// # Safety
// `prng` must be a live handle and `out` valid for writes.
enum MpStatus mp_prng_uniform(struct MpPrng *prng, double a, double b, double *out);

// Network with weights drawn from MT19937 seeded with `seed`.
//
// # Safety
// `out` must be valid for writes.
enum MpStatus mp_net_new(enum MpCellKind kind,
                         size_t layers,
                         size_t cells,
                         uint32_t seed,
                         struct MpNet **out);

// # Safety
// `net` must be null or a handle from [`mp_net_new`]/[`mp_net_load`] not yet freed.
void mp_net_free(struct MpNet *net);

// # Safety
// `net` must be a live handle and `out` valid for writes.
enum MpStatus mp_net_param_count(const struct MpNet *net, size_t *out);

// Runs the sequence `xs[0..len]` and writes the scalar readout.
//
// # Safety
// `net` must be a live handle, `xs` valid for `len` reads, `out` valid for writes.
enum MpStatus mp_net_forward(const struct MpNet *net, const double *xs, size_t len, double *out);

// Writes a JSON checkpoint; `seed` is recorded as metadata.
//
// # Safety
// `net` must be a live handle and `path` a NUL-terminated string.
enum MpStatus mp_net_save(const struct MpNet *net, const char *path, uint32_t seed);

// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum MpStatus mp_net_load(const char *path, struct MpNet **out);

// Largest relative error between BPTT and central differences over all
// parameters for one random episode of length `q`.
//
// # Safety
// `out_max_rel_error` must be valid for writes.
enum MpStatus mp_gradcheck(enum MpCellKind kind,
                           size_t layers,
                           size_t cells,
                           size_t q,
                           uint32_t seed,
                           double *out_max_rel_error);

// MAE of the constant 0.5 predictor. `q_min`/`q_max` of 0 select the
// task defaults.
//
// # Safety
// `out` must be valid for writes.
enum MpStatus mp_baseline_mae(enum MpTaskKind task,
                              size_t position,
                              size_t q_min,
                              size_t q_max,
                              size_t episodes,
                              uint32_t seed,
                              double *out);

// Default training hyperparameters.
struct MpTrainConfig mp_train_config_default(void);

// Trains one network. A diverged run still returns `MP_STATUS_OK` with
// `diverged` set.
//
// # Safety
// `config` must be valid for reads and `out` valid for writes.
enum MpStatus mp_train_run(enum MpCellKind kind,
                           enum MpTaskKind task,
                           size_t layers,
                           size_t cells,
                           size_t position,
                           const struct MpTrainConfig *config,
                           struct MpTrainSummary *out);

// Default reservoir settings for `neurons` neurons.
struct MpEsnConfig mp_esn_config_default(size_t neurons);

// Memory capacity of the reservoir described by `config`. Writes the
// total, and the first `min(mc_len, K)` per-delay values into `mc_k`
// when it is non-null. `out_k` (optional) receives K.
//
// # Safety
// `config` must be valid for reads, `mc_k` null or valid for `mc_len`
// writes, `out_total` valid for writes, `out_k` null or valid for writes.
enum MpStatus mp_esn_memory_capacity(const struct MpEsnConfig *config,
                                     double *mc_k,
                                     size_t mc_len,
                                     size_t *out_k,
                                     double *out_total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMPROBE_H */
