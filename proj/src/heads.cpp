// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/heads.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "side/error.hpp"
#include "side/rng.hpp"

namespace side {

namespace {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix skew_from_upper(const OrthoParam& param) {
  const std::size_t d = param.dim;
  Matrix a = Matrix::Zero(d, d);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j, ++idx) {
      a(i, j) = param.upper[idx];
      a(j, i) = -param.upper[idx];
    }
  }
  return a;
}

Matrix as_matrix(const Tensor& t) {
  require(t.rank() == 2, ErrorCode::dim_mismatch, "expected a rank-2 tensor");
  return Eigen::Map<const Matrix>(t.data(), t.dim(0), t.dim(1));
}

Tensor from_matrix(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()),
            static_cast<std::size_t>(m.cols())});
  Eigen::Map<Matrix>(t.data(), m.rows(), m.cols()) = m;
  return t;
}

}  // namespace

std::string head_type_name(HeadType type) {
  return type == HeadType::side ? "side" : "infodisent";
}

HeadType head_type_from_name(const std::string& name) {
  if (name == "side") return HeadType::side;
  if (name == "infodisent") return HeadType::infodisent;
  fail(ErrorCode::invalid_argument, "unknown head type: " + name);
}

OrthoParam OrthoParam::zeros(std::size_t dim) {
  OrthoParam p;
  p.dim = dim;
  p.upper.assign(upper_count(dim), 0.0);
  return p;
}

std::size_t OrthoParam::index(std::size_t i, std::size_t j) const {
  return i * (2 * dim - i - 1) / 2 + (j - i - 1);
}

Tensor materialize_orthogonal(const OrthoParam& param) {
  require(param.dim >= 1, ErrorCode::invalid_argument,
          "orthogonal map dimension must be >= 1");
  require(param.upper.size() == OrthoParam::upper_count(param.dim),
          ErrorCode::dim_mismatch, "orthogonal parameter length mismatch");
  const std::size_t d = param.dim;
  const Matrix a = skew_from_upper(param);
  const Matrix b = Matrix::Identity(d, d) + a;
  // U = (I - A)(I + A)^{-1} = 2 (I + A)^{-1} - I
  const Matrix u =
      2.0 * b.partialPivLu().solve(Matrix::Identity(d, d)) - Matrix::Identity(d, d);
  const double residual =
      (u.transpose() * u - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  require(residual < 1e-6, ErrorCode::numeric,
          "orthogonal map materialization failed (I + A near singular)");
  return from_matrix(u);
}

std::vector<double> orthogonal_backward(const OrthoParam& param,
                                        const Tensor& upstream_du) {
  const std::size_t d = param.dim;
  require(upstream_du.rank() == 2 && upstream_du.dim(0) == d &&
              upstream_du.dim(1) == d,
          ErrorCode::dim_mismatch, "orthogonal backward: dU shape mismatch");
  const Matrix a = skew_from_upper(param);
  const Matrix b = Matrix::Identity(d, d) + a;
  const Matrix g = as_matrix(upstream_du);
  // dU = -2 B^{-1} dA B^{-1}  =>  dL/dA = -2 B^{-T} G B^{-T}
  Matrix x = b.transpose().partialPivLu().solve(g);
  x = b.partialPivLu().solve(x.transpose()).transpose();
  std::vector<double> grad(param.upper.size(), 0.0);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j, ++idx) {
      grad[idx] = -2.0 * (x(i, j) - x(j, i));
    }
  }
  return grad;
}

OrthoParam ortho_from_matrix(const Tensor& u) {
  const Matrix um = as_matrix(u);
  require(um.rows() == um.cols(), ErrorCode::dim_mismatch,
          "ortho_from_matrix: matrix must be square");
  const std::size_t d = static_cast<std::size_t>(um.rows());
  const Matrix b = Matrix::Identity(d, d) + um;
  Eigen::PartialPivLU<Matrix> lu(b);
  const Matrix a = lu.solve(Matrix::Identity(d, d) - um);
  const double skew_residual = (a + a.transpose()).cwiseAbs().maxCoeff();
  require(skew_residual < 1e-6, ErrorCode::numeric,
          "ortho_from_matrix: input is not a Cayley-representable rotation");
  OrthoParam param = OrthoParam::zeros(d);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j, ++idx) {
      param.upper[idx] = 0.5 * (a(i, j) - a(j, i));
    }
  }
  return param;
}

std::size_t ScoresSheet::active_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (mask[i] && w[i] > 0.0) ++count;
  }
  return count;
}

void ScoresSheet::enforce_mask() {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!mask[i]) w[i] = 0.0;
  }
}

Tensor HeadParams::effective_scores() const {
  Tensor eff = Tensor::zeros_like(scores.w);
  for (std::size_t i = 0; i < eff.size(); ++i) {
    if (!scores.mask[i]) continue;
    const double w = scores.w[i];
    eff[i] = type == HeadType::infodisent ? std::abs(w) : std::max(w, 0.0);
  }
  return eff;
}

HeadParams init_side_head(std::size_t feature_channels,
                          std::size_t prototype_count, std::size_t num_classes,
                          std::uint64_t seed, bool compose_ortho) {
  require(feature_channels >= 1 && prototype_count >= 1 && num_classes >= 1,
          ErrorCode::invalid_argument, "head dims must be >= 1");
  HeadParams p;
  p.type = HeadType::side;
  p.feature_channels = feature_channels;
  p.prototype_count = prototype_count;
  p.num_classes = num_classes;
  p.compose_ortho = compose_ortho;
  Rng rng(seed);
  p.expansion = Tensor({prototype_count, feature_channels});
  const double expansion_std = 1.0 / std::sqrt(static_cast<double>(feature_channels));
  for (std::size_t i = 0; i < p.expansion.size(); ++i) {
    p.expansion[i] = rng.normal(0.0, expansion_std);
  }
  p.scores.w = Tensor({num_classes, prototype_count});
  for (std::size_t i = 0; i < p.scores.w.size(); ++i) {
    p.scores.w[i] = rng.normal(1.0, 0.1);
  }
  p.scores.mask.assign(p.scores.w.size(), 1);
  if (compose_ortho) p.ortho = OrthoParam::zeros(feature_channels);
  return p;
}

HeadParams init_infodisent_head(std::size_t feature_channels,
                                std::size_t num_classes, std::uint64_t seed) {
  require(feature_channels >= 1 && num_classes >= 1,
          ErrorCode::invalid_argument, "head dims must be >= 1");
  HeadParams p;
  p.type = HeadType::infodisent;
  p.feature_channels = feature_channels;
  p.prototype_count = feature_channels;
  p.num_classes = num_classes;
  Rng rng(seed);
  p.ortho = OrthoParam::zeros(feature_channels);
  p.scores.w = Tensor({num_classes, feature_channels});
  for (std::size_t i = 0; i < p.scores.w.size(); ++i) {
    p.scores.w[i] = rng.normal(1.0, 0.1);
  }
  p.scores.mask.assign(p.scores.w.size(), 1);
  return p;
}

HeadGradients HeadGradients::zeros_for(const HeadParams& params) {
  HeadGradients g;
  if (params.type == HeadType::side) {
    g.expansion = Tensor::zeros_like(params.expansion);
  }
  g.scores_w = Tensor::zeros_like(params.scores.w);
  if (params.has_ortho()) {
    g.ortho_upper.assign(params.ortho.upper.size(), 0.0);
  }
  return g;
}

void HeadGradients::accumulate(const HeadGradients& other) {
  for (std::size_t i = 0; i < expansion.size(); ++i) {
    expansion[i] += other.expansion[i];
  }
  for (std::size_t i = 0; i < scores_w.size(); ++i) {
    scores_w[i] += other.scores_w[i];
  }
  for (std::size_t i = 0; i < ortho_upper.size(); ++i) {
    ortho_upper[i] += other.ortho_upper[i];
  }
}

namespace {

void check_features(const Tensor& features, const HeadParams& params) {
  require(features.rank() == 3, ErrorCode::dim_mismatch,
          "head input must be d x H x W");
  require(features.dim(0) == params.feature_channels, ErrorCode::dim_mismatch,
          "head input channel count mismatch");
}

/// Pools every projected channel and records the winning cells.
std::vector<PoolCell> pool_channels(const Tensor& projected) {
  const std::size_t cp = projected.dim(0);
  const std::size_t hw = projected.dim(1) * projected.dim(2);
  const std::size_t width = projected.dim(2);
  std::vector<PoolCell> cells(cp);
  for (std::size_t c = 0; c < cp; ++c) {
    const PoolResult r = mxpool_full(
        std::span<const double>(projected.data() + c * hw, hw));
    PoolCell& cell = cells[c];
    cell.value = r.value;
    cell.pos_index = static_cast<std::uint32_t>(r.pos_index);
    cell.neg_index = static_cast<std::uint32_t>(r.neg_index);
    cell.pos_active = r.pos_active;
    cell.neg_active = r.neg_active;
    // The dominant branch defines the reported cell and sign.
    const double pos = r.pos_active ? projected[c * hw + r.pos_index] : 0.0;
    const double neg = r.neg_active ? -projected[c * hw + r.neg_index] : 0.0;
    const std::size_t win = pos >= neg ? r.pos_index : r.neg_index;
    cell.sign = pos >= neg ? 1 : -1;
    cell.h = static_cast<std::uint32_t>(win / width);
    cell.w = static_cast<std::uint32_t>(win % width);
  }
  return cells;
}

}  // namespace

HeadOutput side_forward(const Tensor& features, const HeadParams& params) {
  require(params.type == HeadType::side, ErrorCode::invalid_argument,
          "side_forward called on a non-sparse head");
  check_features(features, params);
  HeadOutput out;
  const Tensor* input = &features;
  if (params.compose_ortho) {
    const Tensor u = materialize_orthogonal(params.ortho);
    out.pre_expansion = channel_project(features, u);
    input = &out.pre_expansion;
  }
  const Tensor projected = channel_project(*input, params.expansion);
  out.pool = pool_channels(projected);
  const std::size_t cp = params.prototype_count;
  const std::size_t classes = params.num_classes;
  out.pooled.resize(cp);
  for (std::size_t j = 0; j < cp; ++j) out.pooled[j] = out.pool[j].value;
  out.logits = Tensor({classes});
  const Tensor eff = params.effective_scores();
  for (std::size_t c = 0; c < classes; ++c) {
    double z = 0.0;
    for (std::size_t j = 0; j < cp; ++j) z += eff(c, j) * out.pooled[j];
    out.logits[c] = z;
  }
  require(out.logits.all_finite(), ErrorCode::numeric,
          "non-finite logits in head forward");
  out.probs = sigmoid_vec(out.logits);
  return out;
}

void side_backward(const Tensor& features, const HeadParams& params,
                   const HeadOutput& out, std::span<const double> dprobs,
                   HeadGradients& grads) {
  require(params.type == HeadType::side, ErrorCode::invalid_argument,
          "side_backward called on a non-sparse head");
  check_features(features, params);
  const std::size_t cp = params.prototype_count;
  const std::size_t classes = params.num_classes;
  const std::size_t d = params.feature_channels;
  require(dprobs.size() == classes, ErrorCode::dim_mismatch,
          "side_backward: upstream gradient length mismatch");

  // dL/dz through the sigmoid.
  std::vector<double> dz(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double p = out.probs[c];
    dz[c] = dprobs[c] * p * (1.0 - p);
  }

  // Scores gradient: dz_c * v_j, discarded where the weight is dead or
  // masked (relu subgradient 0 keeps zeroed weights inactive).
  std::vector<double> dv(cp, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double g = dz[c];
    for (std::size_t j = 0; j < cp; ++j) {
      const std::size_t idx = c * cp + j;
      if (params.scores.mask[idx] && params.scores.w[idx] > 0.0) {
        grads.scores_w[idx] += g * out.pooled[j];
        dv[j] += g * params.scores.w[idx];
      }
    }
  }

  // Expansion gradient through the pooling: each prototype's gradient is
  // dv_j times the input column at each active branch cell.
  const Tensor& input = params.compose_ortho ? out.pre_expansion : features;
  const std::size_t hw = input.dim(1) * input.dim(2);
  std::vector<double> dpre;
  if (params.compose_ortho) dpre.assign(d * hw, 0.0);
  for (std::size_t j = 0; j < cp; ++j) {
    const double g = dv[j];
    if (g == 0.0) continue;
    const PoolCell& cell = out.pool[j];
    for (int branch = 0; branch < 2; ++branch) {
      const bool active = branch == 0 ? cell.pos_active : cell.neg_active;
      if (!active) continue;
      const std::size_t s = branch == 0 ? cell.pos_index : cell.neg_index;
      for (std::size_t k = 0; k < d; ++k) {
        grads.expansion(j, k) += g * input[k * hw + s];
      }
      if (params.compose_ortho) {
        for (std::size_t k = 0; k < d; ++k) {
          dpre[k * hw + s] += g * params.expansion(j, k);
        }
      }
    }
  }

  if (params.compose_ortho) {
    Tensor dpre_t({d, input.dim(1), input.dim(2)}, std::move(dpre));
    const Tensor du = channel_project_backward_weights(features, dpre_t);
    const std::vector<double> dupper = orthogonal_backward(params.ortho, du);
    for (std::size_t i = 0; i < dupper.size(); ++i) {
      grads.ortho_upper[i] += dupper[i];
    }
  }
}

HeadOutput infodisent_forward(const Tensor& features,
                              const HeadParams& params) {
  require(params.type == HeadType::infodisent, ErrorCode::invalid_argument,
          "infodisent_forward called on a non-baseline head");
  check_features(features, params);
  HeadOutput out;
  const Tensor u = materialize_orthogonal(params.ortho);
  out.pre_expansion = channel_project(features, u);
  out.pool = pool_channels(out.pre_expansion);
  const std::size_t d = params.feature_channels;
  const std::size_t classes = params.num_classes;
  out.pooled.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.pooled[j] = out.pool[j].value;
  out.logits = Tensor({classes});
  for (std::size_t c = 0; c < classes; ++c) {
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      z += std::abs(params.scores.w(c, j)) * out.pooled[j];
    }
    out.logits[c] = z;
  }
  require(out.logits.all_finite(), ErrorCode::numeric,
          "non-finite logits in head forward");
  out.probs = softmax_vec(out.logits);
  return out;
}

void infodisent_backward(const Tensor& features, const HeadParams& params,
                         const HeadOutput& out,
                         std::span<const double> dlogits,
                         HeadGradients& grads) {
  require(params.type == HeadType::infodisent, ErrorCode::invalid_argument,
          "infodisent_backward called on a non-baseline head");
  check_features(features, params);
  const std::size_t d = params.feature_channels;
  const std::size_t classes = params.num_classes;
  require(dlogits.size() == classes, ErrorCode::dim_mismatch,
          "infodisent_backward: upstream gradient length mismatch");

  std::vector<double> dv(d, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double g = dlogits[c];
    for (std::size_t j = 0; j < d; ++j) {
      const double w = params.scores.w(c, j);
      const double sign = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
      grads.scores_w(c, j) += g * out.pooled[j] * sign;
      dv[j] += g * std::abs(w);
    }
  }

  // dL/d(U F) is sparse: upstream lands on each active branch cell.
  const std::size_t hw = features.dim(1) * features.dim(2);
  std::vector<double> dpre(d * hw, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double g = dv[j];
    if (g == 0.0) continue;
    const PoolCell& cell = out.pool[j];
    if (cell.pos_active) dpre[j * hw + cell.pos_index] += g;
    if (cell.neg_active) dpre[j * hw + cell.neg_index] += g;
  }
  Tensor dpre_t({d, features.dim(1), features.dim(2)}, std::move(dpre));
  const Tensor du = channel_project_backward_weights(features, dpre_t);
  const std::vector<double> dupper = orthogonal_backward(params.ortho, du);
  for (std::size_t i = 0; i < dupper.size(); ++i) {
    grads.ortho_upper[i] += dupper[i];
  }
}

HeadOutput head_forward(const Tensor& features, const HeadParams& params) {
  return params.type == HeadType::side ? side_forward(features, params)
                                       : infodisent_forward(features, params);
}

}  // namespace side
