// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/losses.hpp"

#include <cmath>

#include "side/error.hpp"

namespace side {

namespace {

void check_batch(const Tensor& probs, std::span<const std::uint32_t> labels) {
  require(probs.rank() == 2, ErrorCode::dim_mismatch,
          "loss input must be N x C");
  require(labels.size() == probs.dim(0), ErrorCode::dim_mismatch,
          "label count does not match batch size");
  for (std::uint32_t y : labels) {
    require(y < probs.dim(1), ErrorCode::out_of_range,
            "label out of range: " + std::to_string(y));
  }
}

double clamp_prob(double p) {
  if (p < kProbEps) return kProbEps;
  if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
  return p;
}

// pow with the 0^0 := 1 convention, so zero exponents reduce exactly to BCE.
double pow0(double base, double exponent) {
  if (exponent == 0.0) return 1.0;
  return std::pow(base, exponent);
}

}  // namespace

std::optional<std::string> AslConfig::validate() const {
  require(gamma_pos >= 0.0 && gamma_neg >= 0.0, ErrorCode::invalid_argument,
          "asl: focusing exponents must be nonnegative");
  require(margin >= 0.0 && margin < 1.0, ErrorCode::invalid_argument,
          "asl: margin must be in [0, 1)");
  if (gamma_pos > gamma_neg) {
    return "asl: gamma_pos > gamma_neg inverts the intended asymmetry "
           "(easy negatives are meant to be attenuated)";
  }
  return std::nullopt;
}

void OclaConfig::validate() const {
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::invalid_argument,
          "ocla: threshold must be in (0, 1)");
  require(lambda >= 0.0, ErrorCode::invalid_argument,
          "ocla: lambda must be nonnegative");
}

double bce(const Tensor& probs, std::span<const std::uint32_t> labels) {
  check_batch(probs, labels);
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = clamp_prob(probs(i, j));
      total += j == labels[i] ? -std::log(p) : -std::log(1.0 - p);
    }
  }
  return total / static_cast<double>(n * c);
}

Tensor bce_backward(const Tensor& probs,
                    std::span<const std::uint32_t> labels) {
  check_batch(probs, labels);
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  const double scale = 1.0 / static_cast<double>(n * c);
  Tensor grad = Tensor::zeros_like(probs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = clamp_prob(probs(i, j));
      grad(i, j) = scale * (j == labels[i] ? -1.0 / p : 1.0 / (1.0 - p));
    }
  }
  return grad;
}

double focal(const Tensor& probs, std::span<const std::uint32_t> labels,
             double gamma) {
  check_batch(probs, labels);
  require(gamma >= 0.0, ErrorCode::invalid_argument,
          "focal: gamma must be nonnegative");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = clamp_prob(probs(i, j));
      if (j == labels[i]) {
        total += -pow0(1.0 - p, gamma) * std::log(p);
      } else {
        total += -pow0(p, gamma) * std::log(1.0 - p);
      }
    }
  }
  return total / static_cast<double>(n * c);
}

Tensor focal_backward(const Tensor& probs,
                      std::span<const std::uint32_t> labels, double gamma) {
  check_batch(probs, labels);
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  const double scale = 1.0 / static_cast<double>(n * c);
  Tensor grad = Tensor::zeros_like(probs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = clamp_prob(probs(i, j));
      double g;
      if (j == labels[i]) {
        g = gamma == 0.0 ? -1.0 / p
                         : gamma * pow0(1.0 - p, gamma - 1.0) * std::log(p) -
                               pow0(1.0 - p, gamma) / p;
      } else {
        g = gamma == 0.0
                ? 1.0 / (1.0 - p)
                : -gamma * pow0(p, gamma - 1.0) * std::log(1.0 - p) +
                      pow0(p, gamma) / (1.0 - p);
      }
      grad(i, j) = scale * g;
    }
  }
  return grad;
}

double asl(const Tensor& probs, std::span<const std::uint32_t> labels,
           const AslConfig& cfg) {
  check_batch(probs, labels);
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = clamp_prob(probs(i, j));
      if (j == labels[i]) {
        total += -pow0(1.0 - p, cfg.gamma_pos) * std::log(p);
      } else {
        const double pm = std::max(p - cfg.margin, 0.0);
        total += -pow0(pm, cfg.gamma_neg) * std::log(1.0 - pm);
      }
    }
  }
  return total / static_cast<double>(n * c);
}

Tensor asl_backward(const Tensor& probs, std::span<const std::uint32_t> labels,
                    const AslConfig& cfg) {
  check_batch(probs, labels);
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  const double scale = 1.0 / static_cast<double>(n * c);
  Tensor grad = Tensor::zeros_like(probs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = clamp_prob(probs(i, j));
      double g = 0.0;
      if (j == labels[i]) {
        const double a = cfg.gamma_pos;
        g = a == 0.0 ? -1.0 / p
                     : a * pow0(1.0 - p, a - 1.0) * std::log(p) -
                           pow0(1.0 - p, a) / p;
      } else {
        const double pm = p - cfg.margin;
        if (pm > 0.0) {  // margin-clipped negatives carry no gradient
          const double b = cfg.gamma_neg;
          g = b == 0.0 ? 1.0 / (1.0 - pm)
                       : -b * pow0(pm, b - 1.0) * std::log(1.0 - pm) +
                             pow0(pm, b) / (1.0 - pm);
        }
      }
      grad(i, j) = scale * g;
    }
  }
  return grad;
}

double ocla_metric(const Tensor& probs, std::span<const std::uint32_t> labels,
                   double threshold) {
  check_batch(probs, labels);
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::invalid_argument,
          "ocla_metric: threshold must be in (0, 1)");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool exact = probs(i, labels[i]) > threshold;
    for (std::size_t j = 0; exact && j < c; ++j) {
      if (j != labels[i] && probs(i, j) > threshold) exact = false;
    }
    if (exact) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double ocla_loss(const Tensor& probs, std::span<const std::uint32_t> labels,
                 const OclaConfig& cfg) {
  check_batch(probs, labels);
  cfg.validate();
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  const double t = cfg.threshold, s = cfg.strength;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sample = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == labels[i]) continue;
      sample += std::max(probs(i, j) - t, 0.0);
    }
    const double py = probs(i, labels[i]);
    sample += s * std::max(py - t, 0.0) - s * (py - t);
    total += sample;
  }
  return total / static_cast<double>(n);
}

Tensor ocla_loss_backward(const Tensor& probs,
                          std::span<const std::uint32_t> labels,
                          const OclaConfig& cfg) {
  check_batch(probs, labels);
  cfg.validate();
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  const double t = cfg.threshold, s = cfg.strength;
  const double scale = 1.0 / static_cast<double>(n);
  Tensor grad = Tensor::zeros_like(probs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs(i, j);
      if (j == labels[i]) {
        // ReLU and linear terms cancel above the threshold.
        grad(i, j) = scale * (p > t ? 0.0 : -s);
      } else {
        grad(i, j) = p > t ? scale : 0.0;
      }
    }
  }
  return grad;
}

double calibration_loss(const Tensor& probs,
                        std::span<const std::uint32_t> labels,
                        const AslConfig& asl_cfg, const OclaConfig& ocla_cfg) {
  return asl(probs, labels, asl_cfg) +
         ocla_cfg.lambda * ocla_loss(probs, labels, ocla_cfg);
}

Tensor calibration_loss_backward(const Tensor& probs,
                                 std::span<const std::uint32_t> labels,
                                 const AslConfig& asl_cfg,
                                 const OclaConfig& ocla_cfg) {
  Tensor grad = asl_backward(probs, labels, asl_cfg);
  const Tensor reg = ocla_loss_backward(probs, labels, ocla_cfg);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] += ocla_cfg.lambda * reg[i];
  }
  return grad;
}

double ce_softmax(const Tensor& logits,
                  std::span<const std::uint32_t> labels) {
  check_batch(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * c;
    double zmax = z[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[j] - zmax);
    total += zmax + std::log(sum) - z[labels[i]];
  }
  return total / static_cast<double>(n);
}

Tensor ce_softmax_backward(const Tensor& logits,
                           std::span<const std::uint32_t> labels) {
  check_batch(logits, labels);
  const std::size_t n = logits.dim(0);
  const double scale = 1.0 / static_cast<double>(n);
  Tensor grad = softmax_vec(logits);
  for (std::size_t i = 0; i < n; ++i) {
    grad(i, labels[i]) -= 1.0;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= scale;
  return grad;
}

}  // namespace side
