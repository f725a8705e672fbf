// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_TENSOR_HPP_
#define SIDE_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace side {

/// Dense row-major tensor of 64-bit reals. Dims are non-empty and every
/// extent is at least 1; the data length always equals the dim product.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);  // zero-filled
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  std::size_t size() const { return data_.size(); }
  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Row-major element access for the common 2-D / 3-D cases.
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * dims_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * dims_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  void fill(double value);
  bool all_finite() const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

/// Value/gradient pair used by the hand-written backward passes.
struct DualTensor {
  Tensor value;
  Tensor grad;

  explicit DualTensor(Tensor v)
      : value(std::move(v)), grad(Tensor::zeros_like(value)) {}
};

/// Signed sparse pooling of one spatial channel:
/// max(ReLU(K)) - max(ReLU(-K)). Records which cells won each branch so
/// backward and explanations can reuse them. Ties go to the lowest
/// row-major index; an all-zero channel activates neither branch.
struct PoolResult {
  double value = 0.0;
  std::size_t pos_index = 0;  // argmax of the positive part
  std::size_t neg_index = 0;  // argmin (most negative element)
  bool pos_active = false;    // max(ReLU(K)) > 0
  bool neg_active = false;    // min(K) < 0
};

PoolResult mxpool_full(std::span<const double> channel);
double mxpool(std::span<const double> channel);
double mxpool(const Tensor& channel);

/// Gradient of mxpool: `upstream` lands on the winning cell of each active
/// branch, zero elsewhere.
Tensor mxpool_backward(const Tensor& channel, double upstream);

/// 1x1 channel projection: out[c',h,w] = sum_d weights[c',d] * input[d,h,w].
/// Spatial layout is preserved.
Tensor channel_project(const Tensor& input, const Tensor& weights);
/// dL/dweights given dL/dout; shapes (C'xHxW upstream, dxHxW input) -> C'xd.
Tensor channel_project_backward_weights(const Tensor& input,
                                        const Tensor& upstream);
/// dL/dinput given dL/dout; shapes (C'xd weights, C'xHxW upstream) -> dxHxW.
Tensor channel_project_backward_input(const Tensor& weights,
                                      const Tensor& upstream);

/// Elementwise logistic function, numerically stable for large |z|.
double sigmoid(double z);
Tensor sigmoid_vec(const Tensor& z);
/// dL/dz from dL/dp where p = sigmoid(z).
Tensor sigmoid_backward(const Tensor& probs, const Tensor& upstream);

/// Softmax over the last dimension, computed with max subtraction.
Tensor softmax_vec(const Tensor& z);
Tensor softmax_backward(const Tensor& probs, const Tensor& upstream);

/// max(w, 0) elementwise; the subgradient at the kink is 0, so entries at or
/// below zero receive no gradient and stay inactive under gradient descent.
Tensor relu_clamp(const Tensor& w);
Tensor relu_clamp_backward(const Tensor& w, const Tensor& upstream);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// Central finite-difference check of an analytic gradient. For each
/// coordinate not excluded by `skip_coord`, compares `analytic` against the
/// central difference of `f` with step `step`; the reported error is
/// |analytic - central| / max(1, |central|). Coordinates near kinks
/// (clamp/max boundaries) should be excluded by the caller.
GradCheckResult grad_check(
    const std::function<double(const Tensor&)>& f, const Tensor& point,
    const Tensor& analytic, double step = 1e-3,
    const std::function<bool(std::size_t)>& skip_coord = {});

}  // namespace side

#endif  // SIDE_TENSOR_HPP_
