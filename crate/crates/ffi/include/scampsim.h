#ifndef SCAMPSIM_H
#define SCAMPSIM_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum ScampStatus {
  SCAMP_STATUS_OK = 0,
  SCAMP_STATUS_NULL_ARGUMENT = 1,
  SCAMP_STATUS_INVALID_ARGUMENT = 2,
  SCAMP_STATUS_BUFFER_TOO_SMALL = 3,
  SCAMP_STATUS_WEIGHTS = 4,
  SCAMP_STATUS_INPUT = 5,
  SCAMP_STATUS_GEOMETRY = 6,
  SCAMP_STATUS_PROGRAM = 7,
  SCAMP_STATUS_COST_TABLE = 8,
  SCAMP_STATUS_SERVO = 9,
  SCAMP_STATUS_JSON = 10,
  SCAMP_STATUS_INTERNAL = 11,
} ScampStatus;

/*
 Analog arithmetic mode of a runner.
 */
typedef enum ScampMode {
  SCAMP_MODE_IDEAL = 0,
  SCAMP_MODE_SATURATING = 1,
} ScampMode;

/*
 A binary CNN.
 */
typedef struct ScampModel ScampModel;

/*
 A model lowered to a plane program plus the array it runs on.
 */
typedef struct ScampRunner ScampRunner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next failing call on this thread.
 */
const char *scamp_last_error_message(void);

/*
 Releases a string returned by this library. NULL is ignored.
 */
void scamp_string_free(char *s);

/*
 Library version as a static NUL-terminated string.
 */
const char *scamp_version(void);

/*
 The built-in seeded random model.
 */
enum ScampStatus scamp_model_default(struct ScampModel **out);

/*
 Uniform random ±1 weights for the default geometry and class names.
 */
enum ScampStatus scamp_model_random(size_t kernel_size, uint64_t seed, struct ScampModel **out);

/*
 Parses a weights JSON document.
 */
enum ScampStatus scamp_model_from_json(const char *json, struct ScampModel **out);

/*
 Serializes the model's weights as JSON.
 */
enum ScampStatus scamp_model_to_json(const struct ScampModel *model, char **out);

/*
 Side of the square network input, or 0 for NULL.
 */
size_t scamp_model_input_size(const struct ScampModel *model);

/*
 Number of classes, or 0 for NULL.
 */
size_t scamp_model_num_classes(const struct ScampModel *model);

/*
 Name of class `index` as a new string.
 */
enum ScampStatus scamp_model_class_name(const struct ScampModel *model, size_t index, char **out);

void scamp_model_free(struct ScampModel *model);

/*
 Direct evaluation of the network: writes one score per class into
 `scores` and the first maximal index into `predicted` (may be NULL).
 */
enum ScampStatus scamp_reference_infer(const struct ScampModel *model,
                                       const uint8_t *pixels,
                                       size_t len,
                                       int64_t *scores,
                                       size_t scores_len,
                                       size_t *predicted);

/*
 Lowers `model` to a plane program. `noise_sigma > 0` adds Gaussian noise
 to every global sum, seeded by `seed`.
 */
enum ScampStatus scamp_runner_new(const struct ScampModel *model,
                                  enum ScampMode mode,
                                  double noise_sigma,
                                  uint64_t seed,
                                  struct ScampRunner **out);

/*
 Runs the lowered program on one input. Class sums are four times the
 reference scores in ideal noiseless mode.
 */
enum ScampStatus scamp_runner_infer(struct ScampRunner *runner,
                                    const uint8_t *pixels,
                                    size_t len,
                                    int64_t *sums,
                                    size_t sums_len,
                                    size_t *predicted);

/*
 Number of instructions in the lowered program, or 0 for NULL.
 */
size_t scamp_runner_instruction_count(const struct ScampRunner *runner);

/*
 The lowered program as a text listing.
 */
enum ScampStatus scamp_runner_listing(const struct ScampRunner *runner, char **out);

/*
 Cost-model latency and throughput of the lowered program. A NULL
 `cost_table_json` selects the shipped table. Throughput is +inf for a
 zero-latency table.
 */
enum ScampStatus scamp_runner_estimate(const struct ScampRunner *runner,
                                       const char *cost_table_json,
                                       double *latency_us,
                                       double *throughput_fps);

void scamp_runner_free(struct ScampRunner *runner);

/*
 Simulates `servo_count` default servos driven by classified frames and
 returns the event timeline as CSV. `frame_us` must be nondecreasing and
 `classes` index rock, paper, scissors.
 */
enum ScampStatus scamp_servo_simulate(const uint64_t *frame_us,
                                      const size_t *classes,
                                      size_t frame_count,
                                      uint64_t inference_latency_us,
                                      size_t servo_count,
                                      uint64_t duration_us,
                                      char **csv_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCAMPSIM_H */
