// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/side.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>
#include <string>

#include "side/dataset.hpp"
#include "side/error.hpp"
#include "side/heads.hpp"
#include "side/metrics.hpp"
#include "side/pipeline.hpp"
#include "side/rng.hpp"

namespace {

thread_local std::string g_last_error;

int map_code(side::ErrorCode code) {
  using side::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return SIDE_ERR_INVALID_ARGUMENT;
    case ErrorCode::dim_mismatch: return SIDE_ERR_DIM_MISMATCH;
    case ErrorCode::out_of_range: return SIDE_ERR_OUT_OF_RANGE;
    case ErrorCode::bad_magic:
    case ErrorCode::bad_version:
    case ErrorCode::truncated:
    case ErrorCode::dims_overflow:
    case ErrorCode::format: return SIDE_ERR_FORMAT;
    case ErrorCode::io: return SIDE_ERR_IO;
    case ErrorCode::numeric: return SIDE_ERR_NUMERIC;
    case ErrorCode::internal: return SIDE_ERR_INTERNAL;
  }
  return SIDE_ERR_INTERNAL;
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return SIDE_OK;
  } catch (const side::Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SIDE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SIDE_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  side::require(p != nullptr, side::ErrorCode::invalid_argument,
                std::string(name) + " must not be null");
}

std::filesystem::path split_manifest(const std::filesystem::path& data_dir,
                                     const std::string& split) {
  side::require(split == "train" || split == "test",
                side::ErrorCode::invalid_argument,
                "split must be 'train' or 'test', got '" + split + "'");
  return data_dir / (split + "_manifest.json");
}

}  // namespace

extern "C" {

struct side_dataset {
  side::LoadedDataset data;
};

struct side_head {
  side::HeadParams params;
  std::string type_name;
};

int side_status_is_usage_error(int status) {
  return status == SIDE_ERR_INVALID_ARGUMENT || status == SIDE_ERR_FORMAT ||
         status == SIDE_ERR_DIM_MISMATCH || status == SIDE_ERR_OUT_OF_RANGE;
}

const char* side_last_error(void) { return g_last_error.c_str(); }

const char* side_version(void) { return "0.1.0"; }

int side_synth(const char* spec_path, const char* out_dir, uint64_t seed,
               uint32_t n_train, uint32_t n_test) {
  return guarded([&] {
    require_arg(spec_path, "spec_path");
    require_arg(out_dir, "out_dir");
    const side::PlantedSpec spec =
        side::PlantedSpec::from_json_file(spec_path);
    side::generate_planted(spec, n_train, n_test, seed, out_dir);
  });
}

int side_train(const char* config_path, const char* data_dir,
               const char* out_dir, const char* stage,
               const char* resume_ckpt) {
  return guarded([&] {
    require_arg(config_path, "config_path");
    require_arg(data_dir, "data_dir");
    require_arg(out_dir, "out_dir");
    const std::string stage_arg = stage ? stage : "all";
    const side::PipelineConfig cfg =
        side::PipelineConfig::from_json_file(config_path);
    const std::filesystem::path data(data_dir);
    const std::filesystem::path out(out_dir);
    const side::LoadedDataset train =
        side::LoadedDataset::load(data / "train_manifest.json");

    if (stage_arg == "all") {
      const side::LoadedDataset test =
          side::LoadedDataset::load(data / "test_manifest.json");
      side::HeadParams params = resume_ckpt
                                    ? side::load_checkpoint(resume_ckpt)
                                    : side::init_head_for(cfg, train);
      side::run_full_pipeline(params, train, test, cfg, out);
      return;
    }

    std::filesystem::create_directories(out);
    if (stage_arg == "pretrain") {
      side::HeadParams params = resume_ckpt
                                    ? side::load_checkpoint(resume_ckpt)
                                    : side::init_head_for(cfg, train);
      side::StageConfig sc = cfg.pretrain;
      if (sc.seed == 0) sc.seed = side::Rng::mix(cfg.seed, 1);
      side::TrainTrace trace = side::run_stage(params, train, sc);
      side::save_checkpoint(params, out / "ckpt_pretrain", "pretrain",
                            sc.epochs);
      side::write_trace_csv(trace, out / "trace.csv");
      return;
    }

    side::require(resume_ckpt != nullptr, side::ErrorCode::invalid_argument,
                  "stage '" + stage_arg + "' requires a resume checkpoint");
    side::CheckpointMeta meta;
    side::HeadParams params = side::load_checkpoint(resume_ckpt, &meta);
    side::require(
        train.feature_dims[0] == params.feature_channels &&
            train.num_classes == params.num_classes,
        side::ErrorCode::dim_mismatch,
        "resume checkpoint does not match the dataset dimensions");

    if (stage_arg == "prune") {
      side::require(params.type == side::HeadType::side,
                    side::ErrorCode::invalid_argument,
                    "pruning applies to the sparse head only");
      params.scores = side::hard_prune(params.scores, cfg.prune);
      side::save_checkpoint(params, out / "ckpt_prune", "prune", meta.epoch);
      side::TrainTrace trace;
      side::EpochRecord record;
      record.epoch = meta.epoch;
      record.stage = "prune";
      record.active_weights = params.scores.active_count();
      record.global_size = side::global_size(params);
      trace.records.push_back(std::move(record));
      side::write_trace_csv(trace, out / "trace.csv");
      return;
    }

    side::Stage st;
    if (stage_arg == "finetune") {
      st = side::Stage::finetune;
    } else if (stage_arg == "calibrate") {
      st = side::Stage::calibrate;
    } else {
      side::fail(side::ErrorCode::invalid_argument,
                 "unknown stage '" + stage_arg + "'");
    }
    side::StageConfig sc =
        st == side::Stage::finetune ? cfg.finetune : cfg.calibrate;
    if (sc.seed == 0) {
      sc.seed = side::Rng::mix(cfg.seed, st == side::Stage::finetune ? 2 : 3);
    }
    side::TrainTrace trace = side::run_stage(params, train, sc);
    const std::string name = "ckpt_" + stage_arg;
    side::save_checkpoint(params, out / name, stage_arg,
                          meta.epoch + sc.epochs);
    side::write_trace_csv(trace, out / "trace.csv");
  });
}

int side_eval(const char* ckpt_dir, const char* data_dir, const char* split,
              const char* report_path, double threshold) {
  return guarded([&] {
    require_arg(ckpt_dir, "ckpt_dir");
    require_arg(data_dir, "data_dir");
    require_arg(report_path, "report_path");
    const std::string split_name = split ? split : "test";
    double t = threshold == 0.0 ? 0.5 : threshold;
    side::require(t > 0.0 && t < 1.0, side::ErrorCode::invalid_argument,
                  "threshold must be in (0, 1)");
    const side::HeadParams params = side::load_checkpoint(ckpt_dir);
    const side::LoadedDataset data = side::LoadedDataset::load(
        split_manifest(data_dir, split_name));
    const side::EvalReport report = side::evaluate(params, data, t);
    side::emit_report(report, report_path);
  });
}

int side_explain(const char* ckpt_dir, const char* data_dir,
                 const char* split, uint64_t sample_index,
                 const char* out_path) {
  return guarded([&] {
    require_arg(ckpt_dir, "ckpt_dir");
    require_arg(data_dir, "data_dir");
    require_arg(out_path, "out_path");
    const std::string split_name = split ? split : "test";
    const side::HeadParams params = side::load_checkpoint(ckpt_dir);
    const side::LoadedDataset data = side::LoadedDataset::load(
        split_manifest(data_dir, split_name));
    side::require(sample_index < data.size(), side::ErrorCode::out_of_range,
                  "sample index " + std::to_string(sample_index) +
                      " out of range (dataset has " +
                      std::to_string(data.size()) + " samples)");
    const side::Explanation expl = side::explain(
        sample_index, data.features[sample_index], params, 0.5);
    std::ofstream out(out_path, std::ios::trunc);
    side::require(out.good(), side::ErrorCode::io,
                  std::string("cannot open for writing: ") + out_path);
    out << expl.to_json_text();
    out.flush();
    side::require(out.good(), side::ErrorCode::io,
                  std::string("write failed: ") + out_path);
  });
}

int side_report_render(const char* report_path, const char* trace_path,
                       char** out_text) {
  return guarded([&] {
    require_arg(out_text, "out_text");
    side::require(report_path != nullptr || trace_path != nullptr,
                  side::ErrorCode::invalid_argument,
                  "need a report path or a trace path");
    std::ostringstream text;
    if (report_path) {
      std::ifstream in(report_path);
      side::require(in.good(), side::ErrorCode::invalid_argument,
                    std::string("cannot open: ") + report_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::parse_error& e) {
        side::fail(side::ErrorCode::format,
                   std::string("invalid report JSON: ") + e.what());
      }
      text << "evaluation report (" << report_path << ")\n";
      for (const char* key : {"accuracy", "ocla", "global_size",
                              "local_size_mean", "n_samples", "threshold"}) {
        if (j.contains(key)) {
          text << "  " << key << ": " << j.at(key).dump() << "\n";
        }
      }
    }
    if (trace_path) {
      std::ifstream in(trace_path);
      side::require(in.good(), side::ErrorCode::invalid_argument,
                    std::string("cannot open: ") + trace_path);
      std::string line, last_of_stage, prev_stage;
      std::getline(in, line);  // header
      text << "training trace (" << trace_path << ")\n";
      text << "  " << line << "\n";
      while (std::getline(in, line)) {
        const std::size_t a = line.find(',');
        const std::size_t b = line.find(',', a + 1);
        side::require(a != std::string::npos && b != std::string::npos,
                      side::ErrorCode::format, "malformed trace row");
        const std::string stage = line.substr(a + 1, b - a - 1);
        if (stage != prev_stage && !last_of_stage.empty()) {
          text << "  " << last_of_stage << "\n";
        }
        prev_stage = stage;
        last_of_stage = line;
      }
      if (!last_of_stage.empty()) text << "  " << last_of_stage << "\n";
    }
    const std::string s = text.str();
    *out_text = static_cast<char*>(std::malloc(s.size() + 1));
    side::require(*out_text != nullptr, side::ErrorCode::internal,
                  "allocation failed");
    std::memcpy(*out_text, s.c_str(), s.size() + 1);
  });
}

void side_string_free(char* text) { std::free(text); }

int side_dataset_open(const char* manifest_path, side_dataset** out) {
  return guarded([&] {
    require_arg(manifest_path, "manifest_path");
    require_arg(out, "out");
    auto handle = std::make_unique<side_dataset>();
    handle->data = side::LoadedDataset::load(manifest_path);
    *out = handle.release();
  });
}

void side_dataset_close(side_dataset* dataset) { delete dataset; }

uint32_t side_dataset_num_samples(const side_dataset* dataset) {
  return dataset ? static_cast<uint32_t>(dataset->data.size()) : 0;
}

uint32_t side_dataset_num_classes(const side_dataset* dataset) {
  return dataset ? dataset->data.num_classes : 0;
}

void side_dataset_feature_dims(const side_dataset* dataset,
                               uint32_t dims_out[3]) {
  if (!dataset || !dims_out) return;
  dims_out[0] = dataset->data.feature_dims[0];
  dims_out[1] = dataset->data.feature_dims[1];
  dims_out[2] = dataset->data.feature_dims[2];
}

int side_head_load(const char* ckpt_dir, side_head** out) {
  return guarded([&] {
    require_arg(ckpt_dir, "ckpt_dir");
    require_arg(out, "out");
    auto handle = std::make_unique<side_head>();
    handle->params = side::load_checkpoint(ckpt_dir);
    handle->type_name = side::head_type_name(handle->params.type);
    *out = handle.release();
  });
}

void side_head_close(side_head* head) { delete head; }

const char* side_head_type(const side_head* head) {
  return head ? head->type_name.c_str() : "";
}

uint32_t side_head_num_classes(const side_head* head) {
  return head ? static_cast<uint32_t>(head->params.num_classes) : 0;
}

uint32_t side_head_num_prototypes(const side_head* head) {
  return head ? static_cast<uint32_t>(head->params.prototype_count) : 0;
}

uint32_t side_head_feature_channels(const side_head* head) {
  return head ? static_cast<uint32_t>(head->params.feature_channels) : 0;
}

int side_head_predict(const side_head* head, const double* features,
                      size_t feature_len, uint32_t height, uint32_t width,
                      double* probs_out, size_t probs_len) {
  return guarded([&] {
    require_arg(head, "head");
    require_arg(features, "features");
    require_arg(probs_out, "probs_out");
    const std::size_t d = head->params.feature_channels;
    side::require(height >= 1 && width >= 1,
                  side::ErrorCode::invalid_argument,
                  "spatial dims must be >= 1");
    side::require(feature_len == d * height * width,
                  side::ErrorCode::dim_mismatch,
                  "feature_len does not equal d * height * width");
    side::require(probs_len == head->params.num_classes,
                  side::ErrorCode::dim_mismatch,
                  "probs_len does not equal the class count");
    side::Tensor x({d, height, width},
                   std::vector<double>(features, features + feature_len));
    const side::HeadOutput out = side::head_forward(x, head->params);
    for (std::size_t c = 0; c < probs_len; ++c) probs_out[c] = out.probs[c];
  });
}

}  // extern "C"
