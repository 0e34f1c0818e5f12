/* C interface to the preference-optimization laboratory. */

#ifndef PREFOPT_H
#define PREFOPT_H

/* This file is generated by cbindgen from the Rust sources; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status code returned by every fallible call.
 */
typedef enum PrefoptStatus {
  PREFOPT_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  PREFOPT_STATUS_NULL_POINTER = 1,
  /*
   A string argument was not valid UTF-8.
   */
  PREFOPT_STATUS_INVALID_UTF8 = 2,
  /*
   JSON parsing or validation failed; see the last error message.
   */
  PREFOPT_STATUS_CONFIG_ERROR = 3,
  /*
   A domain precondition was violated (unknown id, shape mismatch, ...).
   */
  PREFOPT_STATUS_DOMAIN_ERROR = 4,
  /*
   Training or evaluation aborted; see the last error message.
   */
  PREFOPT_STATUS_RUNTIME_ERROR = 5,
  /*
   One or more identity checks failed.
   */
  PREFOPT_STATUS_VERIFY_FAILED = 6,
} PrefoptStatus;

/*
 Opaque tabular softmax policy.
 */
typedef struct PrefoptPolicy PrefoptPolicy;

/*
 Opaque discrete preference world.
 */
typedef struct PrefoptWorld PrefoptWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the most recent failure on this thread. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *prefopt_last_error_message(void);

/*
 Library version as a static string.
 */
const char *prefopt_version(void);

/*
 Parses a world definition (same JSON schema as the CLI world files).

 # Safety
 `json` must be a valid NUL-terminated string; `out` must be a valid
 pointer. On success `*out` owns a world that must be released with
 `prefopt_world_free`.
 */
enum PrefoptStatus prefopt_world_from_json(const char *json, struct PrefoptWorld **out);

/*
 Releases a world handle. Null is ignored.

 # Safety
 `world` must have been returned by this library and not yet freed.
 */
void prefopt_world_free(struct PrefoptWorld *world);

/*
 Number of prompts in the world.

 # Safety
 `world` must be a live handle from this library; `out` must be valid.
 */
enum PrefoptStatus prefopt_world_n_prompts(const struct PrefoptWorld *world, size_t *out);

/*
 Number of responses for one prompt.

 # Safety
 `world` must be a live handle from this library; `out` must be valid.
 */
enum PrefoptStatus prefopt_world_n_responses(const struct PrefoptWorld *world,
                                             size_t prompt,
                                             size_t *out);

/*
 Policy initialized at the world's reference distribution.

 # Safety
 `out` must be valid; the returned policy must be released with
 `prefopt_policy_free`.
 */
enum PrefoptStatus prefopt_policy_reference(const struct PrefoptWorld *world,
                                            struct PrefoptPolicy **out);

/*
 Parses a policy snapshot (map of prompt id to logit vector) checked
 against the world's shape.

 # Safety
 As for `prefopt_world_from_json`.
 */
enum PrefoptStatus prefopt_policy_from_json(const char *json,
                                            const struct PrefoptWorld *world,
                                            struct PrefoptPolicy **out);

/*
 Releases a policy handle. Null is ignored.

 # Safety
 `policy` must have been returned by this library and not yet freed.
 */
void prefopt_policy_free(struct PrefoptPolicy *policy);

/*
 Writes the policy's probabilities for one prompt into `buf`, which must
 hold exactly the prompt's response count.

 # Safety
 `buf` must point to `len` writable doubles.
 */
enum PrefoptStatus prefopt_policy_probs(const struct PrefoptPolicy *policy,
                                        size_t prompt,
                                        double *buf,
                                        size_t len);

/*
 Evaluates a loss (JSON fragment, same schema as CLI configs) at a policy
 over the world's exact population data.

 # Safety
 Pointer arguments must be valid; `out` receives the loss value.
 */
enum PrefoptStatus prefopt_loss_value(const struct PrefoptWorld *world,
                                      const struct PrefoptPolicy *policy,
                                      const char *loss_json,
                                      double *out);

/*
 Global L2 norm of the loss gradient with respect to all logits.

 # Safety
 As for `prefopt_loss_value`.
 */
enum PrefoptStatus prefopt_loss_gradient_norm(const struct PrefoptWorld *world,
                                              const struct PrefoptPolicy *policy,
                                              const char *loss_json,
                                              double *out);

/*
 Trains a policy on the world's population data. `loss_json` and
 `optim_json` are the CLI config fragments; pass an empty object for
 defaults.

 # Safety
 Pointer arguments must be valid; on success `*out` owns a policy that
 must be released with `prefopt_policy_free`.
 */
enum PrefoptStatus prefopt_train(const struct PrefoptWorld *world,
                                 const char *loss_json,
                                 const char *optim_json,
                                 struct PrefoptPolicy **out);

/*
 Runs the full identity-verification suite on the built-in worlds.
 Writes the number of failed checks to `failures` and returns
 `VerifyFailed` when it is nonzero.

 # Safety
 `failures` must be a valid pointer.
 */
enum PrefoptStatus prefopt_verify_run(size_t probes, uint64_t seed, size_t *failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREFOPT_H */
