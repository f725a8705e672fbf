// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/metrics.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "side/error.hpp"
#include "side/losses.hpp"

namespace side {

using nlohmann::json;

double accuracy(const Tensor& scores, std::span<const std::uint32_t> labels) {
  require(scores.rank() == 2, ErrorCode::dim_mismatch,
          "accuracy input must be N x C");
  require(scores.dim(0) == labels.size(), ErrorCode::dim_mismatch,
          "accuracy: label count mismatch");
  require(scores.dim(0) >= 1, ErrorCode::invalid_argument,
          "accuracy: empty input");
  const std::size_t n = scores.dim(0), c = scores.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = scores.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

ActiveSets ActiveSets::from(const HeadParams& params) {
  ActiveSets sets;
  sets.classes_ = params.num_classes;
  sets.prototypes_ = params.prototype_count;
  sets.words_ = (sets.prototypes_ + 63) / 64;
  sets.bits_.assign(sets.classes_ * sets.words_, 0);
  const Tensor eff = params.effective_scores();
  for (std::size_t c = 0; c < sets.classes_; ++c) {
    for (std::size_t j = 0; j < sets.prototypes_; ++j) {
      if (eff(c, j) > 0.0) {
        sets.bits_[c * sets.words_ + j / 64] |= 1ULL << (j % 64);
      }
    }
  }
  return sets;
}

bool ActiveSets::active(std::size_t c, std::size_t j) const {
  return (bits_[c * words_ + j / 64] >> (j % 64)) & 1;
}

std::size_t ActiveSets::row_count(std::size_t c) const {
  std::size_t count = 0;
  for (std::size_t w = 0; w < words_; ++w) {
    count += std::popcount(bits_[c * words_ + w]);
  }
  return count;
}

std::size_t ActiveSets::global_size() const {
  std::size_t count = 0;
  for (std::size_t w = 0; w < words_; ++w) {
    std::uint64_t any = 0;
    for (std::size_t c = 0; c < classes_; ++c) any |= bits_[c * words_ + w];
    count += std::popcount(any);
  }
  return count;
}

std::size_t ActiveSets::active_weights() const {
  std::size_t count = 0;
  for (std::uint64_t word : bits_) count += std::popcount(word);
  return count;
}

std::size_t ActiveSets::union_size(std::span<const std::uint32_t> cls) const {
  std::size_t count = 0;
  for (std::size_t w = 0; w < words_; ++w) {
    std::uint64_t u = 0;
    for (std::uint32_t c : cls) u |= bits_[c * words_ + w];
    count += std::popcount(u);
  }
  return count;
}

std::size_t global_size(const HeadParams& params) {
  return ActiveSets::from(params).global_size();
}

std::vector<std::uint32_t> activated_classes(std::span<const double> probs,
                                             double threshold,
                                             bool* fallback) {
  std::vector<std::uint32_t> active;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] > threshold) active.push_back(static_cast<std::uint32_t>(c));
  }
  bool fell_back = false;
  if (active.empty()) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[best]) best = c;
    }
    active.push_back(static_cast<std::uint32_t>(best));
    fell_back = true;
  }
  if (fallback) *fallback = fell_back;
  return active;
}

std::size_t local_size(const HeadOutput& out, const ActiveSets& sets,
                       double threshold, double min_activation) {
  const std::vector<std::uint32_t> active =
      activated_classes(out.probs.values(), threshold);
  if (min_activation <= 0.0) return sets.union_size(active);
  std::vector<bool> seen(sets.prototypes(), false);
  std::size_t count = 0;
  for (std::uint32_t c : active) {
    for (std::size_t j = 0; j < sets.prototypes(); ++j) {
      if (!seen[j] && sets.active(c, j) && out.pooled[j] > min_activation) {
        seen[j] = true;
        ++count;
      }
    }
  }
  return count;
}

Explanation explain(std::uint64_t sample_id, const Tensor& features,
                    const HeadParams& params, double threshold) {
  const HeadOutput out = head_forward(features, params);
  const Tensor eff = params.effective_scores();
  Explanation expl;
  expl.sample_id = sample_id;
  const std::vector<std::uint32_t> active =
      activated_classes(out.probs.values(), threshold, &expl.fallback);
  for (std::uint32_t c : active) {
    ClassExplanation ce;
    ce.class_index = c;
    ce.prob = out.probs[c];
    for (std::size_t j = 0; j < params.prototype_count; ++j) {
      const double w = eff(c, j);
      if (w <= 0.0) continue;
      PrototypeAttribution attr;
      attr.prototype = static_cast<std::uint32_t>(j);
      attr.pooled = out.pooled[j];
      attr.weight = w;
      attr.contribution = w * out.pooled[j];
      attr.h = out.pool[j].h;
      attr.w_pos = out.pool[j].w;
      attr.sign = out.pool[j].sign;
      ce.prototypes.push_back(attr);
    }
    std::stable_sort(ce.prototypes.begin(), ce.prototypes.end(),
                     [](const PrototypeAttribution& a,
                        const PrototypeAttribution& b) {
                       return a.contribution > b.contribution;
                     });
    expl.activated_classes.push_back(std::move(ce));
  }
  return expl;
}

std::string Explanation::to_json_text() const {
  json j;
  j["sample_id"] = sample_id;
  j["fallback"] = fallback;
  json classes = json::array();
  for (const ClassExplanation& ce : activated_classes) {
    json protos = json::array();
    for (const PrototypeAttribution& a : ce.prototypes) {
      protos.push_back({{"proto", a.prototype},
                        {"v", a.pooled},
                        {"w", a.weight},
                        {"contribution", a.contribution},
                        {"h", a.h},
                        {"w_pos", a.w_pos},
                        {"sign", a.sign}});
    }
    classes.push_back({{"class", ce.class_index},
                       {"prob", ce.prob},
                       {"prototypes", std::move(protos)}});
  }
  j["activated_classes"] = std::move(classes);
  return j.dump(2) + "\n";
}

Histogram weight_histogram(const HeadParams& params, std::size_t bins) {
  require(bins >= 1, ErrorCode::invalid_argument,
          "weight_histogram: bins must be >= 1");
  const Tensor eff = params.effective_scores();
  std::vector<double> active;
  for (std::size_t i = 0; i < eff.size(); ++i) {
    if (eff[i] > 0.0) active.push_back(eff[i]);
  }
  Histogram h;
  h.counts.assign(bins, 0);
  double hi = 1.0;
  if (!active.empty()) hi = *std::max_element(active.begin(), active.end());
  h.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.bin_edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
  }
  for (double w : active) {
    std::size_t b = static_cast<std::size_t>(
        std::floor(w / hi * static_cast<double>(bins)));
    if (b >= bins) b = bins - 1;  // the max lands in the last bin
    ++h.counts[b];
  }
  return h;
}

EvalReport evaluate(const HeadParams& params, const LoadedDataset& dataset,
                    double threshold, std::size_t histogram_bins,
                    double min_activation) {
  require(dataset.size() >= 1, ErrorCode::invalid_argument,
          "evaluate: empty dataset");
  require(dataset.num_classes == params.num_classes, ErrorCode::dim_mismatch,
          "evaluate: dataset class count does not match head");
  const ActiveSets sets = ActiveSets::from(params);
  EvalReport report;
  report.threshold = threshold;
  report.n_samples = dataset.size();
  Tensor probs({dataset.size(), params.num_classes});
  double local_total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const HeadOutput out = head_forward(dataset.features[i], params);
    for (std::size_t c = 0; c < params.num_classes; ++c) {
      probs(i, c) = out.probs[c];
    }
    const std::size_t ls = local_size(out, sets, threshold, min_activation);
    report.local_sizes.push_back(ls);
    local_total += static_cast<double>(ls);
  }
  report.accuracy = accuracy(probs, dataset.labels);
  report.ocla = ocla_metric(probs, dataset.labels, threshold);
  report.global_size = sets.global_size();
  report.local_size_mean = local_total / static_cast<double>(dataset.size());
  report.histogram = weight_histogram(params, histogram_bins);
  return report;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::io,
          "cannot open for writing: " + path.string());
  out << text;
  out.flush();
  require(out.good(), ErrorCode::io, "write failed: " + path.string());
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  json j;
  j["accuracy"] = report.accuracy;
  j["ocla"] = report.ocla;
  j["global_size"] = report.global_size;
  j["local_size_mean"] = report.local_size_mean;
  j["n_samples"] = report.n_samples;
  j["threshold"] = report.threshold;
  write_text_file(path, j.dump(2) + "\n");

  const std::filesystem::path dir = path.parent_path();
  const std::string stem = path.stem().string();

  std::string hist = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < report.histogram.counts.size(); ++b) {
    hist += format_double(report.histogram.bin_edges[b]) + "," +
            format_double(report.histogram.bin_edges[b + 1]) + "," +
            std::to_string(report.histogram.counts[b]) + "\n";
  }
  write_text_file(dir / (stem + "_histogram.csv"), hist);

  std::string locals = "sample,local_size\n";
  for (std::size_t i = 0; i < report.local_sizes.size(); ++i) {
    locals += std::to_string(i) + "," +
              std::to_string(report.local_sizes[i]) + "\n";
  }
  write_text_file(dir / (stem + "_local_sizes.csv"), locals);
}

}  // namespace side
