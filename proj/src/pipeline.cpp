// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "side/error.hpp"
#include "side/io.hpp"
#include "side/metrics.hpp"
#include "side/rng.hpp"

namespace side {

using nlohmann::json;

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::pretrain: return "pretrain";
    case Stage::finetune: return "finetune";
    case Stage::calibrate: return "calibrate";
  }
  return "unknown";
}

void StageConfig::validate() const {
  require(epochs >= 1, ErrorCode::invalid_argument,
          "stage config: epochs must be >= 1");
  require(batch_size >= 1, ErrorCode::invalid_argument,
          "stage config: batch_size must be >= 1");
  require(learning_rate >= 0.0, ErrorCode::invalid_argument,
          "stage config: learning_rate must be >= 0");
  if (stage != Stage::calibrate) {
    require(ocla.lambda == 0.0, ErrorCode::invalid_argument,
            "stage config: ocla lambda must be 0 outside calibration");
  }
}

namespace {

// Adaptive-moment-estimation update over one parameter block.
class Adam {
 public:
  Adam(std::size_t size, double lr) : lr_(lr), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> w, std::span<const double> g) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

std::vector<std::uint64_t> active_snapshot(const ScoresSheet& sheet) {
  const std::size_t n = sheet.w.size();
  std::vector<std::uint64_t> bits((n + 63) / 64, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (sheet.mask[i] && sheet.w[i] > 0.0) bits[i / 64] |= 1ULL << (i % 64);
  }
  return bits;
}

struct DatasetEval {
  double loss = 0.0;
  StageMetrics metrics;
};

/// Full forward pass over a dataset: probabilities, accuracy, OCLA, sizes,
/// and (for trace rows) the stage loss on those probabilities.
DatasetEval eval_dataset(const HeadParams& params, const LoadedDataset& ds,
                         const StageConfig& cfg, double metric_threshold) {
  const std::size_t n = ds.size();
  const std::size_t classes = params.num_classes;
  Tensor probs({n, classes});
  Tensor logits({n, classes});
  const ActiveSets sets = ActiveSets::from(params);
  double local_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const HeadOutput out = head_forward(ds.features[i], params);
    for (std::size_t c = 0; c < classes; ++c) {
      probs(i, c) = out.probs[c];
      logits(i, c) = out.logits[c];
    }
    local_total += static_cast<double>(
        local_size(out, sets, metric_threshold));
  }
  DatasetEval eval;
  if (params.type == HeadType::infodisent) {
    eval.loss = ce_softmax(logits, ds.labels);
  } else if (cfg.stage == Stage::calibrate) {
    eval.loss = calibration_loss(probs, ds.labels, cfg.asl, cfg.ocla);
  } else {
    eval.loss = asl(probs, ds.labels, cfg.asl);
  }
  eval.metrics.accuracy = accuracy(probs, ds.labels);
  eval.metrics.ocla = ocla_metric(probs, ds.labels, metric_threshold);
  eval.metrics.global_size = sets.global_size();
  eval.metrics.local_size_mean = local_total / static_cast<double>(n);
  eval.metrics.active_weights = params.scores.active_count();
  return eval;
}

void check_block_finite(const Tensor& block, const char* name,
                        const std::string& ctx) {
  if (!block.all_finite()) {
    fail(ErrorCode::numeric,
         "non-finite values in parameter block '" + std::string(name) +
             "' " + ctx);
  }
}

}  // namespace

TrainTrace run_stage(HeadParams& params, const LoadedDataset& train,
                     const StageConfig& cfg) {
  cfg.validate();
  require(train.size() >= 1, ErrorCode::invalid_argument,
          "run_stage: empty dataset");
  require(train.feature_dims[0] == params.feature_channels,
          ErrorCode::dim_mismatch,
          "run_stage: dataset channels do not match head");
  require(train.num_classes == params.num_classes, ErrorCode::dim_mismatch,
          "run_stage: dataset classes do not match head");
  if (const auto warning = cfg.asl.validate()) {
    std::cerr << "warning: " << *warning << "\n";
  }

  const bool is_side = params.type == HeadType::side;
  const std::size_t classes = params.num_classes;
  const double metric_threshold = 0.5;

  Adam expansion_opt(is_side ? params.expansion.size() : 0, cfg.learning_rate);
  Adam scores_opt(params.scores.w.size(), cfg.learning_rate);
  Adam ortho_opt(params.has_ortho() ? params.ortho.upper.size() : 0,
                 cfg.learning_rate);

  TrainTrace trace;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = Rng::mix(cfg.seed, epoch);
    BatchIterator batches(train, cfg.batch_size, epoch_seed);
    double loss_total = 0.0;
    std::size_t correct = 0;
    std::size_t ocla_hits = 0;
    double local_total = 0.0;
    std::size_t batch_index = 0;
    while (auto batch = batches.next()) {
      ++batch_index;
      const std::string ctx = "at stage " + stage_name(cfg.stage) +
                              " epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batch_index);
      const std::size_t b = batch->labels.size();
      const ActiveSets sets = ActiveSets::from(params);

      std::vector<HeadOutput> outs(b);
      Tensor probs({b, classes});
      Tensor logits({b, classes});
      try {
        for (std::size_t i = 0; i < b; ++i) {
          const Tensor& x = train.features[batch->indices[i]];
          outs[i] = head_forward(x, params);
          for (std::size_t c = 0; c < classes; ++c) {
            probs(i, c) = outs[i].probs[c];
            logits(i, c) = outs[i].logits[c];
          }
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::numeric) {
          fail(ErrorCode::numeric, std::string(e.what()) + " " + ctx);
        }
        throw;
      }

      double loss;
      Tensor upstream;
      if (!is_side) {
        loss = ce_softmax(logits, batch->labels);
        upstream = ce_softmax_backward(logits, batch->labels);
      } else if (cfg.stage == Stage::calibrate) {
        loss = calibration_loss(probs, batch->labels, cfg.asl, cfg.ocla);
        upstream =
            calibration_loss_backward(probs, batch->labels, cfg.asl, cfg.ocla);
      } else {
        loss = asl(probs, batch->labels, cfg.asl);
        upstream = asl_backward(probs, batch->labels, cfg.asl);
      }
      require(std::isfinite(loss), ErrorCode::numeric,
              "non-finite loss " + ctx);

      HeadGradients grads = HeadGradients::zeros_for(params);
      for (std::size_t i = 0; i < b; ++i) {
        const Tensor& x = train.features[batch->indices[i]];
        const std::span<const double> up(upstream.data() + i * classes,
                                         classes);
        if (is_side) {
          side_backward(x, params, outs[i], up, grads);
        } else {
          infodisent_backward(x, params, outs[i], up, grads);
        }
      }

      if (is_side) {
        expansion_opt.step(params.expansion.values(),
                           grads.expansion.values());
        check_block_finite(params.expansion, "expansion", ctx);
      }
      scores_opt.step(params.scores.w.values(), grads.scores_w.values());
      params.scores.enforce_mask();
      check_block_finite(params.scores.w, "scores", ctx);
      if (params.has_ortho()) {
        ortho_opt.step(params.ortho.upper, grads.ortho_upper);
        for (double a : params.ortho.upper) {
          if (!std::isfinite(a)) {
            fail(ErrorCode::numeric,
                 "non-finite values in parameter block 'ortho' " + ctx);
          }
        }
      }

      // Running training metrics from this batch's pre-update outputs.
      loss_total += loss * static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        const double* row = probs.data() + i * classes;
        std::size_t best = 0;
        bool exact = row[batch->labels[i]] > metric_threshold;
        for (std::size_t c = 0; c < classes; ++c) {
          if (row[c] > row[best]) best = c;
          if (c != batch->labels[i] && row[c] > metric_threshold) {
            exact = false;
          }
        }
        if (best == batch->labels[i]) ++correct;
        if (exact) ++ocla_hits;
        local_total += static_cast<double>(
            local_size(outs[i], sets, metric_threshold));
      }
    }

    const double n = static_cast<double>(train.size());
    EpochRecord record;
    record.epoch = epoch;
    record.stage = stage_name(cfg.stage);
    record.loss = loss_total / n;
    record.acc = static_cast<double>(correct) / n;
    record.active_weights = params.scores.active_count();
    record.ocla = static_cast<double>(ocla_hits) / n;
    record.global_size = ActiveSets::from(params).global_size();
    record.local_size_mean = local_total / n;
    trace.records.push_back(std::move(record));
    trace.active_snapshots.push_back(active_snapshot(params.scores));
  }
  return trace;
}

ScoresSheet hard_prune(const ScoresSheet& sheet, const PruneConfig& cfg) {
  require(cfg.avg_per_class >= 1.0, ErrorCode::invalid_argument,
          "prune config: average prototypes per class must be >= 1");
  const std::size_t classes = sheet.classes();
  const std::size_t cp = sheet.prototypes();
  const std::size_t budget = static_cast<std::size_t>(
      std::llround(cfg.avg_per_class * static_cast<double>(classes)));

  struct Entry {
    double value;
    std::size_t row, col;
  };
  std::vector<Entry> candidates;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < cp; ++j) {
      const std::size_t idx = c * cp + j;
      if (sheet.mask[idx] && sheet.w[idx] > 0.0) {
        candidates.push_back({sheet.w[idx], c, j});
      }
    }
  }
  if (budget < candidates.size()) {
    std::sort(candidates.begin(), candidates.end(),
              [](const Entry& a, const Entry& b) {
                if (a.value != b.value) return a.value > b.value;
                if (a.row != b.row) return a.row < b.row;
                return a.col < b.col;
              });
    candidates.resize(budget);
  } else if (budget > candidates.size()) {
    std::cerr << "warning: prune budget " << budget << " exceeds "
              << candidates.size()
              << " active weights; keeping all of them\n";
  }

  ScoresSheet pruned;
  pruned.w = Tensor({classes, cp});
  pruned.mask.assign(classes * cp, 0);
  for (const Entry& e : candidates) {
    const std::size_t idx = e.row * cp + e.col;
    pruned.w[idx] = sheet.w[idx];
    pruned.mask[idx] = 1;
  }
  return pruned;
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig cfg;
  cfg.pretrain.stage = Stage::pretrain;
  cfg.pretrain.epochs = 40;
  cfg.pretrain.learning_rate = 1e-3;
  cfg.pretrain.asl = {0.0, 1.0, 0.05};
  cfg.finetune.stage = Stage::finetune;
  cfg.finetune.epochs = 20;
  cfg.finetune.learning_rate = 1e-4;
  cfg.finetune.asl = {0.0, 4.0, 0.2};
  cfg.calibrate.stage = Stage::calibrate;
  cfg.calibrate.epochs = 10;
  cfg.calibrate.learning_rate = 1e-4;
  cfg.calibrate.asl = {0.0, 4.0, 0.2};
  cfg.calibrate.ocla = {0.5, 1.0, 100.0};
  cfg.prune.avg_per_class = 3.0;
  return cfg;
}

namespace {

void parse_stage(const json& j, StageConfig& cfg, const std::string& name) {
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch_size")) {
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
  }
  if (j.contains("learning_rate")) {
    cfg.learning_rate = j.at("learning_rate").get<double>();
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("asl")) {
    const json& a = j.at("asl");
    if (a.contains("gamma_pos")) cfg.asl.gamma_pos = a.at("gamma_pos").get<double>();
    if (a.contains("gamma_neg")) cfg.asl.gamma_neg = a.at("gamma_neg").get<double>();
    if (a.contains("margin")) cfg.asl.margin = a.at("margin").get<double>();
  }
  if (j.contains("ocla")) {
    const json& o = j.at("ocla");
    if (o.contains("threshold")) cfg.ocla.threshold = o.at("threshold").get<double>();
    if (o.contains("strength")) cfg.ocla.strength = o.at("strength").get<double>();
    if (o.contains("lambda")) cfg.ocla.lambda = o.at("lambda").get<double>();
  }
  if (cfg.stage != Stage::calibrate && cfg.ocla.lambda != 0.0) {
    fail(ErrorCode::invalid_argument,
         "config: ocla lambda must be 0 in stage '" + name + "'");
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format, std::string("invalid config JSON: ") + e.what());
  }
  PipelineConfig cfg = defaults();
  if (j.contains("head")) {
    const json& h = j.at("head");
    if (h.contains("type")) {
      cfg.head_type = head_type_from_name(h.at("type").get<std::string>());
    }
    if (h.contains("c_prime")) {
      cfg.prototype_count = h.at("c_prime").get<std::size_t>();
    }
    if (h.contains("compose_ortho")) {
      cfg.compose_ortho = h.at("compose_ortho").get<bool>();
    }
  }
  if (j.contains("stages")) {
    const json& s = j.at("stages");
    if (s.contains("pretrain")) parse_stage(s.at("pretrain"), cfg.pretrain, "pretrain");
    if (s.contains("finetune")) parse_stage(s.at("finetune"), cfg.finetune, "finetune");
    if (s.contains("calibrate")) parse_stage(s.at("calibrate"), cfg.calibrate, "calibrate");
  }
  if (j.contains("prune")) {
    const json& p = j.at("prune");
    if (p.contains("A")) cfg.prune.avg_per_class = p.at("A").get<double>();
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("metric_threshold")) {
    cfg.metric_threshold = j.at("metric_threshold").get<double>();
  }
  require(cfg.metric_threshold > 0.0 && cfg.metric_threshold < 1.0,
          ErrorCode::invalid_argument,
          "config: metric_threshold must be in (0, 1)");
  return cfg;
}

PipelineConfig PipelineConfig::from_json_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::invalid_argument,
          "cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

HeadParams init_head_for(const PipelineConfig& cfg,
                         const LoadedDataset& train) {
  const std::size_t d = train.feature_dims[0];
  const std::size_t classes = train.num_classes;
  const std::uint64_t init_seed = Rng::mix(cfg.seed, 0x696e6974);
  if (cfg.head_type == HeadType::infodisent) {
    return init_infodisent_head(d, classes, init_seed);
  }
  const std::size_t cp =
      cfg.prototype_count > 0 ? cfg.prototype_count : 2 * d;
  return init_side_head(d, cp, classes, init_seed, cfg.compose_ortho);
}

namespace {

StageConfig with_derived_seed(StageConfig cfg, std::uint64_t base,
                              std::uint64_t tag) {
  if (cfg.seed == 0) cfg.seed = Rng::mix(base, tag);
  return cfg;
}

void append_trace(TrainTrace& into, TrainTrace&& stage_trace,
                  std::size_t& epoch_offset) {
  for (EpochRecord& r : stage_trace.records) {
    r.epoch += epoch_offset;
    into.records.push_back(std::move(r));
  }
  for (auto& snap : stage_trace.active_snapshots) {
    into.active_snapshots.push_back(std::move(snap));
  }
  if (!into.records.empty()) epoch_offset = into.records.back().epoch;
}

}  // namespace

PipelineResult run_full_pipeline(HeadParams& params,
                                 const LoadedDataset& train,
                                 const LoadedDataset& test,
                                 const PipelineConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  const bool save = !out_dir.empty();
  if (save) std::filesystem::create_directories(out_dir);

  PipelineResult result;
  std::size_t epoch_offset = 0;

  const StageConfig pretrain = with_derived_seed(cfg.pretrain, cfg.seed, 1);
  const StageConfig finetune = with_derived_seed(cfg.finetune, cfg.seed, 2);
  const StageConfig calibrate = with_derived_seed(cfg.calibrate, cfg.seed, 3);

  if (pretrain.epochs > 0) {
    append_trace(result.trace, run_stage(params, train, pretrain),
                 epoch_offset);
  }
  result.pre_prune =
      eval_dataset(params, test, pretrain, cfg.metric_threshold).metrics;
  if (save) {
    save_checkpoint(params, out_dir / "ckpt_pretrain", "pretrain",
                    epoch_offset);
  }

  if (params.type == HeadType::infodisent) {
    // The dense baseline has no pruning phase; its pipeline is pretraining.
    result.post_prune = result.pre_prune;
    result.post_finetune = result.pre_prune;
    result.final_metrics = result.pre_prune;
    if (save) {
      write_trace_csv(result.trace, out_dir / "trace.csv");
      write_pipeline_report(result, out_dir / "report.json");
    }
    return result;
  }

  result.prune_budget = static_cast<std::size_t>(std::llround(
      cfg.prune.avg_per_class * static_cast<double>(params.num_classes)));
  params.scores = hard_prune(params.scores, cfg.prune);
  {
    const DatasetEval train_eval =
        eval_dataset(params, train, pretrain, cfg.metric_threshold);
    EpochRecord record;
    record.epoch = epoch_offset;
    record.stage = "prune";
    record.loss = train_eval.loss;
    record.acc = train_eval.metrics.accuracy;
    record.active_weights = train_eval.metrics.active_weights;
    record.ocla = train_eval.metrics.ocla;
    record.global_size = train_eval.metrics.global_size;
    record.local_size_mean = train_eval.metrics.local_size_mean;
    result.trace.records.push_back(std::move(record));
    result.trace.active_snapshots.push_back(active_snapshot(params.scores));
  }
  result.post_prune =
      eval_dataset(params, test, pretrain, cfg.metric_threshold).metrics;
  if (save) {
    save_checkpoint(params, out_dir / "ckpt_prune", "prune", epoch_offset);
  }

  if (finetune.epochs > 0) {
    append_trace(result.trace, run_stage(params, train, finetune),
                 epoch_offset);
  }
  result.post_finetune =
      eval_dataset(params, test, finetune, cfg.metric_threshold).metrics;
  if (save) {
    save_checkpoint(params, out_dir / "ckpt_finetune", "finetune",
                    epoch_offset);
  }

  if (calibrate.epochs > 0) {
    append_trace(result.trace, run_stage(params, train, calibrate),
                 epoch_offset);
  }
  result.final_metrics =
      eval_dataset(params, test, calibrate, cfg.metric_threshold).metrics;
  if (save) {
    save_checkpoint(params, out_dir / "ckpt_calibrate", "calibrate",
                    epoch_offset);
    write_trace_csv(result.trace, out_dir / "trace.csv");
    write_pipeline_report(result, out_dir / "report.json");
  }
  return result;
}

void write_trace_csv(const TrainTrace& trace,
                     const std::filesystem::path& path) {
  std::string csv =
      "epoch,stage,loss,acc,active_weights,ocla,global_size,local_size_mean\n";
  for (const EpochRecord& r : trace.records) {
    csv += std::to_string(r.epoch) + "," + r.stage + "," +
           format_double(r.loss) + "," + format_double(r.acc) + "," +
           std::to_string(r.active_weights) + "," + format_double(r.ocla) +
           "," + std::to_string(r.global_size) + "," +
           format_double(r.local_size_mean) + "\n";
  }
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::io,
          "cannot open for writing: " + path.string());
  out << csv;
  out.flush();
  require(out.good(), ErrorCode::io, "write failed: " + path.string());
}

namespace {

json metrics_json(const StageMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"ocla", m.ocla},
          {"global_size", m.global_size},
          {"local_size_mean", m.local_size_mean},
          {"active_weights", m.active_weights}};
}

}  // namespace

void write_pipeline_report(const PipelineResult& result,
                           const std::filesystem::path& path) {
  json j;
  j["pre_prune"] = metrics_json(result.pre_prune);
  j["post_prune"] = metrics_json(result.post_prune);
  j["post_finetune"] = metrics_json(result.post_finetune);
  j["final"] = metrics_json(result.final_metrics);
  j["prune_budget"] = result.prune_budget;
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::io,
          "cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  out.flush();
  require(out.good(), ErrorCode::io, "write failed: " + path.string());
}

void save_checkpoint(const HeadParams& params,
                     const std::filesystem::path& dir,
                     const std::string& stage, std::size_t epoch) {
  std::filesystem::create_directories(dir);
  json header;
  header["head_type"] = head_type_name(params.type);
  header["d"] = params.feature_channels;
  header["c_prime"] = params.prototype_count;
  header["c_classes"] = params.num_classes;
  header["compose_ortho"] = params.compose_ortho;
  header["stage"] = stage;
  header["epoch"] = epoch;
  {
    std::ofstream out(dir / "header.json", std::ios::trunc);
    require(out.good(), ErrorCode::io,
            "cannot open for writing: " + (dir / "header.json").string());
    out << header.dump(2) << "\n";
    out.flush();
    require(out.good(), ErrorCode::io, "checkpoint header write failed");
  }
  if (params.type == HeadType::side) {
    write_tensor(dir / "expansion.sidt", params.expansion, DType::f64);
  }
  write_tensor(dir / "scores_w.sidt", params.scores.w, DType::f64);
  Tensor mask({params.num_classes, params.prototype_count});
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = params.scores.mask[i] ? 1.0 : 0.0;
  }
  write_tensor(dir / "scores_mask.sidt", mask, DType::f32);
  if (params.has_ortho() && !params.ortho.upper.empty()) {
    Tensor a({params.ortho.upper.size()}, params.ortho.upper);
    write_tensor(dir / "ortho_a.sidt", a, DType::f64);
  }
}

HeadParams load_checkpoint(const std::filesystem::path& dir,
                           CheckpointMeta* meta) {
  const std::filesystem::path header_path = dir / "header.json";
  std::ifstream in(header_path);
  require(in.good(), ErrorCode::invalid_argument,
          "cannot open checkpoint header: " + header_path.string());
  json header;
  try {
    in >> header;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format,
         "invalid checkpoint header: " + std::string(e.what()));
  }

  HeadParams p;
  try {
    p.type = head_type_from_name(header.at("head_type").get<std::string>());
    p.feature_channels = header.at("d").get<std::size_t>();
    p.prototype_count = header.at("c_prime").get<std::size_t>();
    p.num_classes = header.at("c_classes").get<std::size_t>();
    p.compose_ortho = header.value("compose_ortho", false);
    if (meta) {
      meta->stage = header.at("stage").get<std::string>();
      meta->epoch = header.at("epoch").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::format,
         "checkpoint header missing fields: " + std::string(e.what()));
  }

  if (p.type == HeadType::side) {
    p.expansion = read_tensor(dir / "expansion.sidt");
    require(p.expansion.rank() == 2 &&
                p.expansion.dim(0) == p.prototype_count &&
                p.expansion.dim(1) == p.feature_channels,
            ErrorCode::dim_mismatch,
            "checkpoint expansion dims do not match header");
  } else {
    require(p.prototype_count == p.feature_channels, ErrorCode::dim_mismatch,
            "baseline checkpoint must have c_prime == d");
  }
  p.scores.w = read_tensor(dir / "scores_w.sidt");
  require(p.scores.w.rank() == 2 && p.scores.w.dim(0) == p.num_classes &&
              p.scores.w.dim(1) == p.prototype_count,
          ErrorCode::dim_mismatch,
          "checkpoint scores dims do not match header");
  const Tensor mask = read_tensor(dir / "scores_mask.sidt");
  require(mask.same_dims(p.scores.w), ErrorCode::dim_mismatch,
          "checkpoint mask dims do not match scores");
  p.scores.mask.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    require(mask[i] == 0.0 || mask[i] == 1.0, ErrorCode::format,
            "checkpoint mask entries must be 0 or 1");
    p.scores.mask[i] = mask[i] == 1.0 ? 1 : 0;
    require(p.scores.mask[i] || p.scores.w[i] == 0.0, ErrorCode::format,
            "checkpoint has a nonzero masked scores entry");
  }
  if (p.has_ortho()) {
    const std::size_t n = OrthoParam::upper_count(p.feature_channels);
    p.ortho = OrthoParam::zeros(p.feature_channels);
    if (n > 0) {
      const Tensor a = read_tensor(dir / "ortho_a.sidt");
      require(a.rank() == 1 && a.size() == n, ErrorCode::dim_mismatch,
              "checkpoint ortho parameter length mismatch");
      std::copy(a.data(), a.data() + n, p.ortho.upper.begin());
    }
  }
  return p;
}

}  // namespace side
