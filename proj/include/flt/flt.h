/* C interface to the federated layering toolkit. All handles are opaque and
 * owned by the caller; free each with its matching _free function. Strings
 * returned through char** are heap-allocated and released with
 * flt_string_free. On failure a function returns a non-zero status and
 * flt_last_error() describes it (per thread). */
#ifndef FLT_FLT_H
#define FLT_FLT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FLT_API __declspec(dllexport)
#else
#define FLT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum flt_status {
  FLT_OK = 0,
  FLT_ERR_CONFIG = 1,
  FLT_ERR_INPUT = 2,
  FLT_ERR_NUMERIC = 3,
  FLT_ERR_STRUCTURE = 4,
  FLT_ERR_ENCODING = 5,
  FLT_ERR_PROTOCOL = 6,
  FLT_ERR_IO = 7,
  FLT_ERR_ARGUMENT = 8, /* null handle or pointer */
  FLT_ERR_INTERNAL = 99
} flt_status;

FLT_API const char* flt_version(void);
FLT_API const char* flt_last_error(void);
FLT_API const char* flt_status_name(flt_status status);
FLT_API void flt_string_free(char* s);

/* Experiment configuration. */
typedef struct flt_config flt_config;

FLT_API flt_status flt_config_default(flt_config** out);
FLT_API flt_status flt_config_parse(const char* json_text, flt_config** out);
FLT_API flt_status flt_config_load(const char* path, flt_config** out);
FLT_API flt_status flt_config_to_json(const flt_config* config, char** out);
FLT_API flt_status flt_config_set_seed(flt_config* config, uint64_t seed);
FLT_API flt_status flt_config_get_seed(const flt_config* config, uint64_t* seed);
FLT_API flt_status flt_config_set_output_dir(flt_config* config, const char* dir);
/* Borrowed pointer, valid until the config changes or is freed. */
FLT_API flt_status flt_config_get_output_dir(const flt_config* config, const char** dir);
FLT_API void flt_config_free(flt_config* config);

typedef struct flt_run_summary {
  double final_accuracy;
  double final_lyapunov;
  int has_lemma;
  double lemma_pass_rate;
  int has_theorem;
  double theorem_pass_rate;
  int has_privacy;
  double probe_accuracy_layered;
  double probe_accuracy_full;
  int has_security;
  double security;
  int checks_passed;
} flt_run_summary;

/* Full run; writes metrics files under out_dir (the config's output_dir
 * when out_dir is NULL). */
FLT_API flt_status flt_run_experiment(const flt_config* config, const char* out_dir, int plots,
                                      flt_run_summary* summary);
/* Ensemble-size sweep over the config's sweep_seeds. */
FLT_API flt_status flt_collaboration_sweep(const flt_config* config, const char* out_dir,
                                           int plots, int* trend_holds);
/* Attack-grid detection suite over the config's sweep_seeds. */
FLT_API flt_status flt_detection_suite(const flt_config* config, const char* out_dir,
                                       int* operating_point_holds);
/* Text digest of an output directory. */
FLT_API flt_status flt_report(const char* out_dir, char** text, int* checks_passed);

/* Models. */
typedef struct flt_model flt_model;

FLT_API flt_status flt_model_load(const char* checkpoint_path, flt_model** out);
FLT_API flt_status flt_model_save(const flt_model* model, const char* checkpoint_path);
FLT_API flt_status flt_model_dims(const flt_model* model, size_t* input_dim, size_t* num_classes,
                                  size_t* parameter_count);
/* features: rows x input_dim, row-major; labels receives `rows` ints. */
FLT_API flt_status flt_model_predict(const flt_model* model, const double* features, size_t rows,
                                     int* labels);
FLT_API void flt_model_free(flt_model* model);

/* Edge/cloud placement. */
typedef struct flt_placement_problem flt_placement_problem;
typedef struct flt_placement_plan flt_placement_plan;

typedef enum flt_solver { FLT_SOLVER_EXACT = 0, FLT_SOLVER_GREEDY = 1 } flt_solver;

FLT_API flt_status flt_placement_load(const char* path, flt_placement_problem** out);
FLT_API flt_status flt_placement_parse(const char* json_text, flt_placement_problem** out);
FLT_API flt_status flt_placement_solve(const flt_placement_problem* problem, flt_solver solver,
                                       flt_placement_plan** out);
FLT_API flt_status flt_placement_plan_objective(const flt_placement_plan* plan, double* objective,
                                                int* feasible);
/* sides receives one entry per task: 0 edge, 1 cloud. */
FLT_API flt_status flt_placement_plan_assignment(const flt_placement_plan* plan, int* sides,
                                                 size_t capacity, size_t* count);
FLT_API flt_status flt_placement_plan_to_json(const flt_placement_problem* problem,
                                              const flt_placement_plan* plan, char** out);
FLT_API void flt_placement_problem_free(flt_placement_problem* problem);
FLT_API void flt_placement_plan_free(flt_placement_plan* plan);

/* Paillier keys. */
typedef struct flt_keypair flt_keypair;

FLT_API flt_status flt_keypair_generate(unsigned bits, uint64_t seed, flt_keypair** out);
FLT_API flt_status flt_keypair_fingerprint(const flt_keypair* keys, uint64_t* fingerprint);
/* JSON with key_bits, fingerprint and hex n; p and q when include_secret. */
FLT_API flt_status flt_keypair_to_json(const flt_keypair* keys, int include_secret, char** out);
/* Dec(Enc(a) + Enc(b)) for nonnegative a, b; exercises the homomorphism. */
FLT_API flt_status flt_keypair_add_check(const flt_keypair* keys, uint64_t a, uint64_t b,
                                         uint64_t seed, char** decrypted_decimal);
FLT_API void flt_keypair_free(flt_keypair* keys);

#ifdef __cplusplus
}
#endif

#endif
