// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_METRICS_HPP_
#define SIDE_METRICS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "side/dataset.hpp"
#include "side/heads.hpp"

namespace side {

/// Argmax accuracy over rows of an N x C score matrix (probabilities or
/// logits); ties break to the lowest class index.
double accuracy(const Tensor& scores, std::span<const std::uint32_t> labels);

/// Per-class active-prototype bitsets derived from a head's effective score
/// matrix. "Active" means the effective (nonnegative) weight is > 0.
class ActiveSets {
 public:
  static ActiveSets from(const HeadParams& params);

  std::size_t classes() const { return classes_; }
  std::size_t prototypes() const { return prototypes_; }
  bool active(std::size_t c, std::size_t j) const;
  std::size_t row_count(std::size_t c) const;
  /// Number of prototype columns active for at least one class.
  std::size_t global_size() const;
  /// Total number of active (class, prototype) entries.
  std::size_t active_weights() const;
  /// Size of the union of the given classes' prototype sets.
  std::size_t union_size(std::span<const std::uint32_t> cls) const;

 private:
  std::size_t classes_ = 0;
  std::size_t prototypes_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
};

std::size_t global_size(const HeadParams& params);

/// Classes with probability above the threshold; falls back to the argmax
/// class when nothing is activated.
std::vector<std::uint32_t> activated_classes(std::span<const double> probs,
                                             double threshold,
                                             bool* fallback = nullptr);

/// Number of distinct prototypes backing the activated classes of one
/// prediction. When min_activation > 0, only prototypes whose pooled value
/// exceeds it are counted (off by default: association alone counts).
std::size_t local_size(const HeadOutput& out, const ActiveSets& sets,
                       double threshold, double min_activation = 0.0);

struct PrototypeAttribution {
  std::uint32_t prototype = 0;
  double pooled = 0.0;        // v_j
  double weight = 0.0;        // effective w_cj
  double contribution = 0.0;  // w_cj * v_j
  std::uint32_t h = 0;
  std::uint32_t w_pos = 0;
  int sign = 1;
};

struct ClassExplanation {
  std::uint32_t class_index = 0;
  double prob = 0.0;
  std::vector<PrototypeAttribution> prototypes;  // contribution-descending
};

/// Per-sample additive explanation: for each activated class, every
/// prototype with positive effective weight, with contributions that sum to
/// the class logit exactly.
struct Explanation {
  std::uint64_t sample_id = 0;
  bool fallback = false;
  std::vector<ClassExplanation> activated_classes;

  std::string to_json_text() const;
};

Explanation explain(std::uint64_t sample_id, const Tensor& features,
                    const HeadParams& params, double threshold);

struct Histogram {
  std::vector<double> bin_edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

/// Histogram over active effective weights (empty active set yields all-zero
/// counts over [0, 1]).
Histogram weight_histogram(const HeadParams& params, std::size_t bins);

struct EvalReport {
  double accuracy = 0.0;
  double ocla = 0.0;
  std::size_t global_size = 0;
  double local_size_mean = 0.0;
  std::size_t n_samples = 0;
  double threshold = 0.5;
  std::vector<std::size_t> local_sizes;  // per sample
  Histogram histogram;
};

EvalReport evaluate(const HeadParams& params, const LoadedDataset& dataset,
                    double threshold, std::size_t histogram_bins = 32,
                    double min_activation = 0.0);

/// Writes the report JSON plus CSV companions (<stem>_histogram.csv and
/// <stem>_local_sizes.csv next to the report). Byte-identical for identical
/// inputs.
void emit_report(const EvalReport& report, const std::filesystem::path& path);

/// Shortest round-trip decimal formatting; used everywhere text output must
/// be deterministic.
std::string format_double(double value);

}  // namespace side

#endif  // SIDE_METRICS_HPP_
