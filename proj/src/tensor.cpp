// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/tensor.hpp"

#include <cmath>
#include <string>

#include "side/error.hpp"

namespace side {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& dims) {
  require(!dims.empty(), ErrorCode::invalid_argument, "tensor dims are empty");
  std::size_t n = 1;
  for (std::size_t d : dims) {
    require(d >= 1, ErrorCode::invalid_argument, "tensor extent is zero");
    require(n <= SIZE_MAX / d, ErrorCode::dims_overflow,
            "tensor dims overflow");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  data_.assign(checked_product(dims_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  require(checked_product(dims_) == data_.size(), ErrorCode::invalid_argument,
          "tensor data length does not match dims");
}

void Tensor::fill(double value) {
  for (double& x : data_) x = value;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

PoolResult mxpool_full(std::span<const double> channel) {
  require(!channel.empty(), ErrorCode::invalid_argument,
          "mxpool on empty channel");
  PoolResult r;
  double pos_max = 0.0;
  double neg_min = 0.0;
  for (std::size_t i = 0; i < channel.size(); ++i) {
    const double x = channel[i];
    if (std::isnan(x)) fail(ErrorCode::numeric, "NaN in pooling input");
    if (x > pos_max) {
      pos_max = x;
      r.pos_index = i;
      r.pos_active = true;
    }
    if (x < neg_min) {
      neg_min = x;
      r.neg_index = i;
      r.neg_active = true;
    }
  }
  r.value = pos_max - (-neg_min);
  return r;
}

double mxpool(std::span<const double> channel) {
  return mxpool_full(channel).value;
}

double mxpool(const Tensor& channel) { return mxpool(channel.values()); }

Tensor mxpool_backward(const Tensor& channel, double upstream) {
  const PoolResult r = mxpool_full(channel.values());
  Tensor grad = Tensor::zeros_like(channel);
  // d(max(ReLU(K)))/dK is 1 at the positive argmax; d(-max(ReLU(-K)))/dK is
  // +1 at the most negative element.
  if (r.pos_active) grad[r.pos_index] += upstream;
  if (r.neg_active) grad[r.neg_index] += upstream;
  return grad;
}

namespace {

void check_project_dims(const Tensor& input, const Tensor& weights) {
  require(input.rank() == 3, ErrorCode::dim_mismatch,
          "channel_project input must be rank 3 (d x H x W)");
  require(weights.rank() == 2, ErrorCode::dim_mismatch,
          "channel_project weights must be rank 2 (C' x d)");
  require(weights.dim(1) == input.dim(0), ErrorCode::dim_mismatch,
          "channel_project: weight columns != input channels");
}

}  // namespace

Tensor channel_project(const Tensor& input, const Tensor& weights) {
  check_project_dims(input, weights);
  const std::size_t d = input.dim(0);
  const std::size_t hw = input.dim(1) * input.dim(2);
  const std::size_t cp = weights.dim(0);
  Tensor out({cp, input.dim(1), input.dim(2)});
  const double* in = input.data();
  const double* w = weights.data();
  double* o = out.data();
  for (std::size_t c = 0; c < cp; ++c) {
    double* row = o + c * hw;
    for (std::size_t k = 0; k < d; ++k) {
      const double wk = w[c * d + k];
      const double* f = in + k * hw;
      for (std::size_t s = 0; s < hw; ++s) row[s] += wk * f[s];
    }
  }
  return out;
}

Tensor channel_project_backward_weights(const Tensor& input,
                                        const Tensor& upstream) {
  require(input.rank() == 3 && upstream.rank() == 3, ErrorCode::dim_mismatch,
          "channel_project backward: rank mismatch");
  require(input.dim(1) == upstream.dim(1) && input.dim(2) == upstream.dim(2),
          ErrorCode::dim_mismatch,
          "channel_project backward: spatial dims differ");
  const std::size_t d = input.dim(0);
  const std::size_t hw = input.dim(1) * input.dim(2);
  const std::size_t cp = upstream.dim(0);
  Tensor grad({cp, d});
  const double* in = input.data();
  const double* up = upstream.data();
  double* g = grad.data();
  for (std::size_t c = 0; c < cp; ++c) {
    const double* urow = up + c * hw;
    for (std::size_t k = 0; k < d; ++k) {
      const double* f = in + k * hw;
      double acc = 0.0;
      for (std::size_t s = 0; s < hw; ++s) acc += urow[s] * f[s];
      g[c * d + k] = acc;
    }
  }
  return grad;
}

Tensor channel_project_backward_input(const Tensor& weights,
                                      const Tensor& upstream) {
  require(weights.rank() == 2 && upstream.rank() == 3, ErrorCode::dim_mismatch,
          "channel_project backward: rank mismatch");
  require(weights.dim(0) == upstream.dim(0), ErrorCode::dim_mismatch,
          "channel_project backward: output channels differ");
  const std::size_t cp = weights.dim(0);
  const std::size_t d = weights.dim(1);
  const std::size_t hw = upstream.dim(1) * upstream.dim(2);
  Tensor grad({d, upstream.dim(1), upstream.dim(2)});
  const double* w = weights.data();
  const double* up = upstream.data();
  double* g = grad.data();
  for (std::size_t c = 0; c < cp; ++c) {
    const double* urow = up + c * hw;
    for (std::size_t k = 0; k < d; ++k) {
      const double wk = w[c * d + k];
      double* grow = g + k * hw;
      for (std::size_t s = 0; s < hw; ++s) grow[s] += wk * urow[s];
    }
  }
  return grad;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor sigmoid_vec(const Tensor& z) {
  Tensor p = Tensor::zeros_like(z);
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = sigmoid(z[i]);
  return p;
}

Tensor sigmoid_backward(const Tensor& probs, const Tensor& upstream) {
  require(probs.same_dims(upstream), ErrorCode::dim_mismatch,
          "sigmoid backward: shape mismatch");
  Tensor grad = Tensor::zeros_like(probs);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    grad[i] = upstream[i] * probs[i] * (1.0 - probs[i]);
  }
  return grad;
}

Tensor softmax_vec(const Tensor& z) {
  const std::size_t cols = z.dims().back();
  const std::size_t rows = z.size() / cols;
  Tensor p = Tensor::zeros_like(z);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zi = z.data() + r * cols;
    double* pi = p.data() + r * cols;
    double zmax = zi[0];
    for (std::size_t j = 1; j < cols; ++j) zmax = std::max(zmax, zi[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      pi[j] = std::exp(zi[j] - zmax);
      sum += pi[j];
    }
    for (std::size_t j = 0; j < cols; ++j) pi[j] /= sum;
  }
  return p;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& upstream) {
  require(probs.same_dims(upstream), ErrorCode::dim_mismatch,
          "softmax backward: shape mismatch");
  const std::size_t cols = probs.dims().back();
  const std::size_t rows = probs.size() / cols;
  Tensor grad = Tensor::zeros_like(probs);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pi = probs.data() + r * cols;
    const double* ui = upstream.data() + r * cols;
    double* gi = grad.data() + r * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += pi[j] * ui[j];
    for (std::size_t j = 0; j < cols; ++j) gi[j] = pi[j] * (ui[j] - dot);
  }
  return grad;
}

Tensor relu_clamp(const Tensor& w) {
  Tensor out = Tensor::zeros_like(w);
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? w[i] : 0.0;
  return out;
}

Tensor relu_clamp_backward(const Tensor& w, const Tensor& upstream) {
  require(w.same_dims(upstream), ErrorCode::dim_mismatch,
          "relu_clamp backward: shape mismatch");
  Tensor grad = Tensor::zeros_like(w);
  for (std::size_t i = 0; i < w.size(); ++i) {
    grad[i] = w[i] > 0.0 ? upstream[i] : 0.0;
  }
  return grad;
}

GradCheckResult grad_check(const std::function<double(const Tensor&)>& f,
                           const Tensor& point, const Tensor& analytic,
                           double step,
                           const std::function<bool(std::size_t)>& skip_coord) {
  require(point.same_dims(analytic), ErrorCode::dim_mismatch,
          "grad_check: analytic gradient shape mismatch");
  GradCheckResult result;
  Tensor x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (skip_coord && skip_coord(i)) {
      ++result.skipped;
      continue;
    }
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f(x);
    x[i] = saved - step;
    const double fm = f(x);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      fail(ErrorCode::numeric, "grad_check: non-finite function value");
    }
    const double central = (fp - fm) / (2.0 * step);
    const double rel =
        std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace side
