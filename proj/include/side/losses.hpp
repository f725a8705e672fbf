// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_LOSSES_HPP_
#define SIDE_LOSSES_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "side/tensor.hpp"

namespace side {

/// Probabilities are clamped into [kProbEps, 1 - kProbEps] before any log.
constexpr double kProbEps = 1e-7;

/// Asymmetric-loss hyperparameters: separate focusing exponents for
/// positive/negative targets and a probability margin that clips easy
/// negatives (p_m = max(p - m, 0)).
struct AslConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 0.0;
  double margin = 0.0;

  /// Returns a warning when gamma_pos > gamma_neg (the asymmetry is meant to
  /// attenuate easy negatives); hard-fails only on out-of-domain values.
  std::optional<std::string> validate() const;
};

/// One-correct-label-activation settings: activation threshold t, corrective
/// strength s for the true class, and the regularizer weight lambda.
struct OclaConfig {
  double threshold = 0.5;
  double strength = 1.0;
  double lambda = 0.0;

  void validate() const;
};

// All batch losses take an N x C matrix and per-sample integer labels and
// reduce by mean over every entry (mean over samples for ce_softmax, which
// is one value per sample). Backward functions return the gradient of that
// mean.

double bce(const Tensor& probs, std::span<const std::uint32_t> labels);
Tensor bce_backward(const Tensor& probs, std::span<const std::uint32_t> labels);

double focal(const Tensor& probs, std::span<const std::uint32_t> labels,
             double gamma);
Tensor focal_backward(const Tensor& probs,
                      std::span<const std::uint32_t> labels, double gamma);

double asl(const Tensor& probs, std::span<const std::uint32_t> labels,
           const AslConfig& cfg);
Tensor asl_backward(const Tensor& probs, std::span<const std::uint32_t> labels,
                    const AslConfig& cfg);

/// Fraction of samples whose activated set {j : P[i,j] > t} is exactly the
/// true class and nothing else.
double ocla_metric(const Tensor& probs, std::span<const std::uint32_t> labels,
                   double threshold);

/// Hinge-style regularizer pushing exactly one class above the threshold:
/// penalizes incorrect activations, cancels on a correct activation, and
/// drives the correct class upward when nothing is activated.
double ocla_loss(const Tensor& probs, std::span<const std::uint32_t> labels,
                 const OclaConfig& cfg);
Tensor ocla_loss_backward(const Tensor& probs,
                          std::span<const std::uint32_t> labels,
                          const OclaConfig& cfg);

/// asl + lambda * ocla_loss, the final-stage objective.
double calibration_loss(const Tensor& probs,
                        std::span<const std::uint32_t> labels,
                        const AslConfig& asl_cfg, const OclaConfig& ocla_cfg);
Tensor calibration_loss_backward(const Tensor& probs,
                                 std::span<const std::uint32_t> labels,
                                 const AslConfig& asl_cfg,
                                 const OclaConfig& ocla_cfg);

/// Mean negative log softmax probability of the true class, in log space.
double ce_softmax(const Tensor& logits, std::span<const std::uint32_t> labels);
Tensor ce_softmax_backward(const Tensor& logits,
                           std::span<const std::uint32_t> labels);

}  // namespace side

#endif  // SIDE_LOSSES_HPP_
