// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_HEADS_HPP_
#define SIDE_HEADS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "side/tensor.hpp"

namespace side {

enum class HeadType { side, infodisent };

std::string head_type_name(HeadType type);
HeadType head_type_from_name(const std::string& name);

/// Skew-symmetric parameterization of an orthogonal map via the Cayley
/// transform U = (I - A)(I + A)^{-1}. Only the strictly-upper triangle is
/// stored; A is materialized on demand.
struct OrthoParam {
  std::size_t dim = 0;
  std::vector<double> upper;  // row-major strictly-upper entries, i < j

  static OrthoParam zeros(std::size_t dim);
  static std::size_t upper_count(std::size_t dim) {
    return dim * (dim - 1) / 2;
  }
  std::size_t index(std::size_t i, std::size_t j) const;  // requires i < j
};

/// Materializes U from the skew parameter; the result is orthogonal to
/// solver precision by construction.
Tensor materialize_orthogonal(const OrthoParam& param);

/// Pullback of a loss gradient dL/dU onto the strictly-upper entries.
std::vector<double> orthogonal_backward(const OrthoParam& param,
                                        const Tensor& upstream_du);

/// Inverse Cayley transform A = (I - U)(I + U)^{-1} for an orthogonal U with
/// det +1 and no -1 eigenvalue. Used to seed a head with a known rotation.
OrthoParam ortho_from_matrix(const Tensor& u);

/// Final linear layer ("scores sheet"): raw weights plus a frozen prune
/// mask. Masked-out entries are exactly zero and never receive gradient;
/// effective weights are max(W, 0) under the sparse head and |W| under the
/// dense baseline.
struct ScoresSheet {
  Tensor w;                   // C_classes x C'
  std::vector<std::uint8_t> mask;  // 1 = trainable

  std::size_t classes() const { return w.dim(0); }
  std::size_t prototypes() const { return w.dim(1); }
  bool masked(std::size_t c, std::size_t j) const {
    return mask[c * prototypes() + j] == 0;
  }
  /// Number of entries with mask set and clamped weight > 0.
  std::size_t active_count() const;
  /// Forces masked entries to exactly zero.
  void enforce_mask();
};

struct HeadParams {
  HeadType type = HeadType::side;
  std::size_t feature_channels = 0;  // d
  std::size_t prototype_count = 0;   // C'
  std::size_t num_classes = 0;
  bool compose_ortho = false;  // sparse head only: apply U before expansion

  Tensor expansion;   // C' x d (sparse head only)
  OrthoParam ortho;   // baseline always; sparse head iff compose_ortho
  ScoresSheet scores;

  bool has_ortho() const {
    return type == HeadType::infodisent || compose_ortho;
  }
  /// Effective nonnegative score matrix: relu(W) under mask for the sparse
  /// head, |W| for the dense baseline.
  Tensor effective_scores() const;
};

/// Sparse head init: scores ~ N(1.0, 0.1) so every prototype starts active,
/// expansion ~ N(0, 1/sqrt(d)), mask all-true, optional ortho at identity.
HeadParams init_side_head(std::size_t feature_channels,
                          std::size_t prototype_count, std::size_t num_classes,
                          std::uint64_t seed, bool compose_ortho = false);

/// Dense baseline init: ortho at identity, scores ~ N(1.0, 0.1), C' == d.
HeadParams init_infodisent_head(std::size_t feature_channels,
                                std::size_t num_classes, std::uint64_t seed);

/// Winning pooling cell per prototype; sign tells which branch dominated.
struct PoolCell {
  double value = 0.0;
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  int sign = 1;
  // branch bookkeeping consumed by the fused backward
  std::uint32_t pos_index = 0;
  std::uint32_t neg_index = 0;
  bool pos_active = false;
  bool neg_active = false;
};

struct HeadOutput {
  std::vector<double> pooled;  // v, length C'
  Tensor logits;               // z, [C_classes]
  Tensor probs;                // p, [C_classes]
  std::vector<PoolCell> pool;  // per prototype
  Tensor pre_expansion;        // U*F when an ortho map is composed (else empty)
};

struct HeadGradients {
  Tensor expansion;                 // C' x d
  Tensor scores_w;                  // C x C'
  std::vector<double> ortho_upper;  // matches OrthoParam::upper

  static HeadGradients zeros_for(const HeadParams& params);
  void accumulate(const HeadGradients& other);
};

/// Sparse-head forward: v = mxpool(expansion * F) per prototype,
/// z = (max(W,0) .* mask) v, p = sigmoid(z).
HeadOutput side_forward(const Tensor& features, const HeadParams& params);

/// Accumulates parameter gradients for the sparse head given dL/dp.
/// Entries with W <= 0 or mask unset receive exactly zero gradient.
void side_backward(const Tensor& features, const HeadParams& params,
                   const HeadOutput& out, std::span<const double> dprobs,
                   HeadGradients& grads);

/// Dense baseline forward: v = mxpool(U * F) per channel, z = |W| v,
/// p = softmax(z).
HeadOutput infodisent_forward(const Tensor& features, const HeadParams& params);

/// Accumulates parameter gradients for the dense baseline given dL/dz.
void infodisent_backward(const Tensor& features, const HeadParams& params,
                         const HeadOutput& out, std::span<const double> dlogits,
                         HeadGradients& grads);

/// Dispatches on params.type.
HeadOutput head_forward(const Tensor& features, const HeadParams& params);

}  // namespace side

#endif  // SIDE_HEADS_HPP_
