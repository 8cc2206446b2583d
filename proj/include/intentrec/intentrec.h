#ifndef INTENTREC_H
#define INTENTREC_H

/*
 * C interface to the intentrec engine.
 *
 * Every call returns an ir_status. On failure the message is kept per thread
 * and read with ir_last_error(). Handles are opaque and released with their
 * matching *_free function; passing NULL to a free function is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define IR_API __declspec(dllexport)
#else
#define IR_API __attribute__((visibility("default")))
#endif

/* Values 2-4 match the CLI exit codes. */
typedef enum ir_status {
    IR_OK = 0,
    IR_ERR_CONFIG = 2,
    IR_ERR_DATA = 3,
    IR_ERR_NUMERIC = 4,
    IR_ERR_DIMENSION = 5,
    IR_ERR_INDEX = 6,
    IR_ERR_CONTRACT = 7,
    IR_ERR_IO = 8,
    IR_ERR_INVALID_ARGUMENT = 9,
    IR_ERR_INTERNAL = 10
} ir_status;

typedef struct ir_config ir_config;
typedef struct ir_model ir_model;

typedef enum ir_ablation_mode {
    IR_ABLATE_ARCHITECTURE = 0,
    IR_ABLATE_HEADS = 1,
    IR_ABLATE_BOTH = 2
} ir_ablation_mode;

/* One engagement event, mirroring the JSONL schema. genres holds up to three ids. */
typedef struct ir_interaction {
    int64_t timestamp;
    int32_t item_id;
    int32_t action_type;
    int32_t genres[3];
    int32_t genre_count;
    int32_t movie_show;
    int32_t tsr_bucket;
    double duration;
    double episode_position;
} ir_interaction;

IR_API const char* ir_version(void);
IR_API const char* ir_last_error(void);
IR_API const char* ir_status_name(ir_status status);

/* ---- configuration ---- */

/* name is "micro", "desk" or "paper". */
IR_API ir_status ir_config_profile(const char* name, ir_config** out);
/* Accepts a config file or any manifest that embeds one. */
IR_API ir_status ir_config_load(const char* path, ir_config** out);
IR_API ir_status ir_config_from_json(const char* json, ir_config** out);
IR_API ir_status ir_config_save(const ir_config* config, const char* path);
IR_API void ir_config_free(ir_config* config);

IR_API ir_status ir_config_set_seed(ir_config* config, uint64_t seed);
IR_API ir_status ir_config_set_epochs(ir_config* config, int epochs);
IR_API ir_status ir_config_set_lambda(ir_config* config, double lambda);
/* "v0", "v1", "v2" or "v3". */
IR_API ir_status ir_config_set_variant(ir_config* config, const char* variant);
IR_API ir_status ir_config_set_threads(ir_config* config, int threads);
/* Writes the 16-hex-digit config hash plus a terminator into buf (>= 17 bytes). */
IR_API ir_status ir_config_hash(const ir_config* config, char* buf, size_t buf_len);

/* ---- commands ----
 * Commands that produce a JSON result hand back a malloc'd string through
 * json_out (may be NULL to discard). Release it with ir_string_free.
 */

/* Optional progress sink for long commands; user is passed through untouched. */
typedef void (*ir_progress_fn)(const char* message, void* user);

IR_API ir_status ir_generate(const ir_config* config, const char* out_dir, int force, char** json_out);
IR_API ir_status ir_train(const ir_config* config, const char* data_dir, const char* out_dir, int resume,
                          ir_progress_fn progress, void* user, char** json_out);
/* split is "test" or "val"; NULL means "test". */
IR_API ir_status ir_evaluate(const char* checkpoint, const char* data_dir, const char* out_dir, const char* split,
                             char** json_out);
IR_API ir_status ir_compare(const char* baseline_report, const char* candidate_report, const char* out_file,
                            char** json_out);
IR_API ir_status ir_cluster(const char* checkpoint, const char* data_dir, const char* out_dir, int k,
                            size_t exemplars, uint64_t seed, char** json_out);
IR_API ir_status ir_ablate(const ir_config* config, const char* out_dir, ir_ablation_mode mode,
                           const uint64_t* seeds, size_t seed_count, ir_progress_fn progress, void* user,
                           char** json_out);
IR_API ir_status ir_inspect(const char* path, char** json_out);
IR_API void ir_string_free(char* s);

/* ---- in-memory model ---- */

/* Fresh model initialised from the config's init seed. */
IR_API ir_status ir_model_create(const ir_config* config, ir_model** out);
IR_API ir_status ir_model_load(const char* checkpoint, ir_model** out);
IR_API void ir_model_free(ir_model* model);
IR_API ir_status ir_model_num_items(const ir_model* model, int32_t* out);
/* Total trainable scalar count. */
IR_API ir_status ir_model_num_parameters(const ir_model* model, size_t* out);

/*
 * Next-item scores (pre-softmax logits) after the last interaction of a
 * history. scores must hold ir_model_num_items() doubles.
 */
IR_API ir_status ir_model_score(const ir_model* model, const ir_interaction* history, size_t length, double* scores,
                                size_t scores_len);

#ifdef __cplusplus
}
#endif

#endif /* INTENTREC_H */
