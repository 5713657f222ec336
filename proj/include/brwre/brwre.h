#ifndef BRWRE_BRWRE_H
#define BRWRE_BRWRE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BRWRE_API __declspec(dllexport)
#else
#define BRWRE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum brwre_status {
  BRWRE_OK = 0,
  BRWRE_ERR_INVALID_ARGUMENT = 1,
  BRWRE_ERR_CONFIG = 2,
  BRWRE_ERR_IO = 3,
  BRWRE_ERR_NUMERIC = 4,
  BRWRE_ERR_EXPLOSION = 5,
  BRWRE_ERR_INTERNAL = 7
} brwre_status;

/* Process exit codes the CLI maps run results onto. */
enum {
  BRWRE_EXIT_OK = 0,
  BRWRE_EXIT_TEST_FAILURE = 1,
  BRWRE_EXIT_CONFIG = 2,
  BRWRE_EXIT_EXPLOSION = 3,
  BRWRE_EXIT_OTHER = 4
};

typedef struct brwre_context brwre_context;
typedef struct brwre_env brwre_env;
typedef struct brwre_law brwre_law;

BRWRE_API const char* brwre_version(void);

/* Message of the last failed call on this thread, "" if none. */
BRWRE_API const char* brwre_last_error(void);

/* Exit code for a status returned by any call. */
BRWRE_API int brwre_exit_code(brwre_status status);

/* Resolved default configuration as JSON. Owned by the library, valid until
   the next call on this thread. */
BRWRE_API const char* brwre_default_config(void);

/* config_json may be NULL or "" for the defaults. Unknown keys and invalid
   values fail with BRWRE_ERR_CONFIG. */
BRWRE_API brwre_status brwre_context_create(const char* config_json, brwre_context** out);
BRWRE_API void brwre_context_destroy(brwre_context* ctx);

BRWRE_API brwre_status brwre_set_seed(brwre_context* ctx, uint64_t seed);
BRWRE_API brwre_status brwre_set_workers(brwre_context* ctx, int workers); /* 0: all cores */
BRWRE_API brwre_status brwre_set_output(brwre_context* ctx, const char* dir);
BRWRE_API brwre_status brwre_set_suite(brwre_context* ctx, const char* suite); /* quick | full */

/* Resolved configuration of the context as JSON, valid until the next call
   on ctx. */
BRWRE_API const char* brwre_context_config(brwre_context* ctx);

/* Runs gen-env | solve | simulate | verify | study. *exit_code receives the
   run verdict (0, 1 or 3) when the call itself succeeds. */
BRWRE_API brwre_status brwre_run(brwre_context* ctx, const char* subcommand, int* exit_code);

/* Summary JSON of the last run on ctx, "{}" before any run. */
BRWRE_API const char* brwre_last_summary(brwre_context* ctx);

/* Output directory of the last run on ctx, "" before any run. */
BRWRE_API const char* brwre_last_output(brwre_context* ctx);

/* Environment xi^n on the grid with side n L, from the grid and environment sections
   of a config. */
BRWRE_API brwre_status brwre_env_create(const char* config_json, brwre_env** out);
BRWRE_API void brwre_env_destroy(brwre_env* env);
BRWRE_API size_t brwre_env_side(const brwre_env* env);
/* which: "xi" | "xi_e" | "I_xi" | "resonant". Copies side*side values. */
BRWRE_API brwre_status brwre_env_values(const brwre_env* env, const char* which, double* buf, size_t len);
BRWRE_API double brwre_env_renormalization(const brwre_env* env);

BRWRE_API brwre_status brwre_law_create(double beta, int64_t K, brwre_law** out);
BRWRE_API void brwre_law_destroy(brwre_law* law);
BRWRE_API brwre_status brwre_law_pmf(const brwre_law* law, int64_t k, double* p);
BRWRE_API brwre_status brwre_law_ccdf(const brwre_law* law, int64_t m, double* p); /* P[k > m] */

#ifdef __cplusplus
}
#endif

#endif
