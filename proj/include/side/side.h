/* Copyright 2026 The SIDE Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the SIDE interpretable-classification-head library.
 * All functions return side_status; on failure, side_last_error() holds a
 * thread-local description of the most recent error. Handles are opaque and
 * must be released with their matching *_close function.
 */

#ifndef SIDE_SIDE_H_
#define SIDE_SIDE_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum side_status {
  SIDE_OK = 0,
  SIDE_ERR_INVALID_ARGUMENT = 1, /* bad flags, unusable config, missing input */
  SIDE_ERR_FORMAT = 2,           /* corrupt file contents */
  SIDE_ERR_DIM_MISMATCH = 3,
  SIDE_ERR_OUT_OF_RANGE = 4,
  SIDE_ERR_IO = 5,      /* write/read failures mid-run */
  SIDE_ERR_NUMERIC = 6, /* non-finite values encountered */
  SIDE_ERR_INTERNAL = 7
} side_status;

/* Nonzero when the status reflects bad input rather than a runtime failure;
 * the CLI maps usage errors to exit code 1 and runtime errors to 2. */
int side_status_is_usage_error(int status);

/* Thread-local message for the most recent failing call in this thread. */
const char* side_last_error(void);

const char* side_version(void);

/* ---- workflow entry points (mirror the CLI subcommands) ---- */

/* Generates a planted-concept dataset described by the JSON spec file into
 * out_dir (train/, test/, manifests, truth.json). */
int side_synth(const char* spec_path, const char* out_dir, uint64_t seed,
               uint32_t n_train, uint32_t n_test);

/* Runs training per the JSON config against data_dir (train_manifest.json +
 * test_manifest.json), writing checkpoints, trace.csv and report.json under
 * out_dir. stage is one of "pretrain", "prune", "finetune", "calibrate",
 * "all" (NULL means "all"); single stages other than pretrain require
 * resume_ckpt (NULL otherwise). */
int side_train(const char* config_path, const char* data_dir,
               const char* out_dir, const char* stage,
               const char* resume_ckpt);

/* Evaluates a checkpoint on one split ("train" or "test") of data_dir and
 * writes the report JSON plus CSV companions. threshold == 0 selects the
 * default 0.5. */
int side_eval(const char* ckpt_dir, const char* data_dir, const char* split,
              const char* report_path, double threshold);

/* Writes the explanation JSON for one sample of the chosen split. */
int side_explain(const char* ckpt_dir, const char* data_dir,
                 const char* split, uint64_t sample_index,
                 const char* out_path);

/* Renders a human-readable summary of an evaluation report and/or a
 * training trace. Either path may be NULL (not both). The returned string
 * must be freed with side_string_free. */
int side_report_render(const char* report_path, const char* trace_path,
                       char** out_text);
void side_string_free(char* text);

/* ---- opaque handles for embedding ---- */

typedef struct side_dataset side_dataset;
typedef struct side_head side_head;

/* Loads every sample referenced by a manifest into memory. */
int side_dataset_open(const char* manifest_path, side_dataset** out);
void side_dataset_close(side_dataset* dataset);
uint32_t side_dataset_num_samples(const side_dataset* dataset);
uint32_t side_dataset_num_classes(const side_dataset* dataset);
/* dims_out receives {channels, height, width}. */
void side_dataset_feature_dims(const side_dataset* dataset,
                               uint32_t dims_out[3]);

int side_head_load(const char* ckpt_dir, side_head** out);
void side_head_close(side_head* head);
const char* side_head_type(const side_head* head);
uint32_t side_head_num_classes(const side_head* head);
uint32_t side_head_num_prototypes(const side_head* head);
uint32_t side_head_feature_channels(const side_head* head);

/* Runs the head on one feature map laid out channel-major (d x H x W) and
 * writes per-class probabilities. feature_len must equal d*H*W for the given
 * spatial size and probs_len must equal the class count. */
int side_head_predict(const side_head* head, const double* features,
                      size_t feature_len, uint32_t height, uint32_t width,
                      double* probs_out, size_t probs_len);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SIDE_SIDE_H_ */
