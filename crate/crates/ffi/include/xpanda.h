#ifndef XPANDA_H
#define XPANDA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XpandaStatus {
  XPANDA_STATUS_OK = 0,
  XPANDA_STATUS_NULL_POINTER = 1,
  XPANDA_STATUS_INVALID_UTF8 = 2,
  XPANDA_STATUS_INVALID_CONFIG = 3,
  XPANDA_STATUS_INVALID_ARGUMENT = 4,
  XPANDA_STATUS_RUN_FAILED = 5,
  XPANDA_STATUS_BACKEND_FAILED = 6,
  XPANDA_STATUS_PANIC = 7,
} XpandaStatus;

/**
 * Opaque engine handle.
 */
typedef struct XpandaEngine XpandaEngine;

/**
 * Opaque run result handle.
 */
typedef struct XpandaRunResult XpandaRunResult;

/**
 * Partition parameters; see `xpanda_partition_config_default`.
 */
typedef struct XpandaPartitionConfig {
  size_t n;
  size_t overlap_min;
  size_t overlap_max;
  double alpha;
  size_t max_size;
} XpandaPartitionConfig;

typedef struct XpandaPartitionPlan {
  size_t w;
  size_t chunk_count;
  size_t stride;
  size_t size;
  size_t delta;
} XpandaPartitionPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none.
 */
const char *xpanda_last_error(void);

const char *xpanda_version(void);

/**
 * Builds an engine from TOML configuration text. When `scenario_json` is not
 * null the engine uses a scripted backend with those rules, whatever the
 * configuration says.
 */
enum XpandaStatus xpanda_engine_new(const char *config_toml,
                                    const char *scenario_json,
                                    struct XpandaEngine **out);

/**
 * Builds an engine from a TOML configuration file.
 */
enum XpandaStatus xpanda_engine_from_file(const char *path, struct XpandaEngine **out);

void xpanda_engine_free(struct XpandaEngine *engine);

/**
 * Runs one query over `context`. On success `*out` receives a result handle.
 */
enum XpandaStatus xpanda_engine_run(const struct XpandaEngine *engine,
                                    const char *query,
                                    const char *context,
                                    struct XpandaRunResult **out);

const char *xpanda_result_answer(const struct XpandaRunResult *result);

bool xpanda_result_concluded(const struct XpandaRunResult *result);

size_t xpanda_result_replay_count(const struct XpandaRunResult *result);

/**
 * Run trace as JSON Lines.
 */
const char *xpanda_result_trace(const struct XpandaRunResult *result);

void xpanda_result_free(struct XpandaRunResult *result);

struct XpandaPartitionConfig xpanda_partition_config_default(void);

enum XpandaStatus xpanda_plan_partition(size_t w,
                                        const struct XpandaPartitionConfig *config,
                                        struct XpandaPartitionPlan *out);

enum XpandaStatus xpanda_token_f1(const char *prediction, const char *gold, double *out);

/**
 * Exact match against `gold_count` gold strings.
 */
enum XpandaStatus xpanda_exact_match(const char *prediction,
                                     const char *const *golds,
                                     size_t gold_count,
                                     uint8_t *out);

enum XpandaStatus xpanda_seq_match_ratio(const char *a, const char *b, double *out);

/**
 * Resolves a row-major `x` by `y` rank matrix with at most `mrt` replays.
 */
enum XpandaStatus xpanda_aov_resolve(const uint32_t *ranks,
                                     size_t x,
                                     size_t y,
                                     size_t mrt,
                                     bool *out_success,
                                     size_t *out_scans);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XPANDA_H */
