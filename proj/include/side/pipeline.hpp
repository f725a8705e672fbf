// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_PIPELINE_HPP_
#define SIDE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "side/dataset.hpp"
#include "side/heads.hpp"
#include "side/losses.hpp"

namespace side {

enum class Stage { pretrain, finetune, calibrate };

std::string stage_name(Stage stage);

struct StageConfig {
  Stage stage = Stage::pretrain;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  AslConfig asl;
  OclaConfig ocla;  // lambda is 0 outside the calibration stage
  std::uint64_t seed = 0;

  void validate() const;
};

struct PruneConfig {
  double avg_per_class = 0.0;  // A; the global budget is k = round(A * C)
};

struct EpochRecord {
  std::size_t epoch = 0;  // cumulative across the pipeline
  std::string stage;
  double loss = 0.0;
  double acc = 0.0;
  std::size_t active_weights = 0;
  double ocla = 0.0;
  std::size_t global_size = 0;
  double local_size_mean = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> records;
  // Per-record snapshot of the active-entry bitset (mask set and W > 0),
  // kept in memory for permanence checks; not serialized.
  std::vector<std::vector<std::uint64_t>> active_snapshots;
};

void write_trace_csv(const TrainTrace& trace,
                     const std::filesystem::path& path);

/// Runs one training stage of minibatch Adam (beta1 0.9, beta2 0.999,
/// eps 1e-8) in place. Loss is ASL for pretrain/finetune and ASL + lambda *
/// OCLA for calibrate; the dense baseline head trains with softmax CE.
/// Deterministic given the config seed.
TrainTrace run_stage(HeadParams& params, const LoadedDataset& train,
                     const StageConfig& cfg);

/// One-shot global magnitude prune: keeps the k = round(A * C) largest
/// clamped weights (ties: value desc, row asc, col asc), zeroes and
/// permanently masks everything else. If fewer than k positive weights
/// exist, keeps all of them and warns.
ScoresSheet hard_prune(const ScoresSheet& sheet, const PruneConfig& cfg);

struct StageMetrics {
  double accuracy = 0.0;
  double ocla = 0.0;
  std::size_t global_size = 0;
  double local_size_mean = 0.0;
  std::size_t active_weights = 0;
};

struct PipelineConfig {
  HeadType head_type = HeadType::side;
  std::size_t prototype_count = 0;  // 0: default 2 * d (baseline: always d)
  bool compose_ortho = false;
  StageConfig pretrain;
  StageConfig finetune;
  StageConfig calibrate;
  PruneConfig prune;
  std::uint64_t seed = 0;
  double metric_threshold = 0.5;

  static PipelineConfig defaults();
  static PipelineConfig from_json_file(const std::filesystem::path& path);
  static PipelineConfig from_json_text(const std::string& text);
};

struct PipelineResult {
  TrainTrace trace;
  StageMetrics pre_prune;    // test metrics after pretraining
  StageMetrics post_prune;   // test metrics right after the hard prune
  StageMetrics post_finetune;
  StageMetrics final_metrics;
  std::size_t prune_budget = 0;
};

/// pretrain -> hard prune -> finetune -> calibrate, with a test-set
/// evaluation and (when out_dir is non-empty) a checkpoint after each stage.
/// Stages with zero epochs are skipped. The dense baseline runs pretraining
/// only. Writes trace.csv and report.json under out_dir when given.
PipelineResult run_full_pipeline(HeadParams& params,
                                 const LoadedDataset& train,
                                 const LoadedDataset& test,
                                 const PipelineConfig& cfg,
                                 const std::filesystem::path& out_dir = {});

/// Initializes the head described by the pipeline config for a dataset.
HeadParams init_head_for(const PipelineConfig& cfg,
                         const LoadedDataset& train);

void write_pipeline_report(const PipelineResult& result,
                           const std::filesystem::path& path);

/// Checkpoint directory: header.json plus one tensor file per parameter
/// block (expansion.sidt, scores_w.sidt, scores_mask.sidt, ortho_a.sidt).
/// All parameter payloads are stored as f64 so reloaded heads reproduce
/// forward outputs bit-exactly.
void save_checkpoint(const HeadParams& params,
                     const std::filesystem::path& dir,
                     const std::string& stage, std::size_t epoch);

struct CheckpointMeta {
  std::string stage;
  std::size_t epoch = 0;
};

HeadParams load_checkpoint(const std::filesystem::path& dir,
                           CheckpointMeta* meta = nullptr);

}  // namespace side

#endif  // SIDE_PIPELINE_HPP_
