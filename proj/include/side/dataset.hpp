// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SIDE_DATASET_HPP_
#define SIDE_DATASET_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "side/tensor.hpp"

namespace side {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::uint32_t label = 0;
};

struct DatasetManifest {
  std::uint32_t num_classes = 0;
  std::array<std::uint32_t, 3> feature_dims{};  // d, H, W
  std::vector<ManifestEntry> samples;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Synthetic feature-map recipe: each class plants `concepts_per_class`
/// activation spikes on its assigned latent axes, Gaussian noise is added
/// everywhere, spurious spikes appear on non-assigned concepts at
/// `distractor_rate`, and a fixed orthogonal channel mixing hides the axes.
struct PlantedSpec {
  std::uint32_t num_classes = 0;        // C
  std::uint32_t num_concepts = 0;       // G <= d
  std::uint32_t concepts_per_class = 0; // A*
  std::uint32_t channel_dim = 0;        // d
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  double signal_strength = 0.0;  // spike magnitude mean
  double noise_std = 0.0;
  std::uint64_t mixing_seed = 0;
  double distractor_rate = 0.0;

  void validate() const;
  static PlantedSpec from_json_file(const std::filesystem::path& path);
  static PlantedSpec from_json_text(const std::string& text);
};

struct PlantedTruth {
  std::vector<std::vector<std::uint32_t>> class_concepts;  // S_c per class
  std::uint64_t mixing_seed = 0;

  static PlantedTruth load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Random rotation (orthogonal, det +1) derived deterministically from the
/// seed via QR of a Gaussian matrix.
Tensor mixing_matrix(std::uint64_t seed, std::size_t dim);

struct GeneratedDataset {
  DatasetManifest train;
  DatasetManifest test;
  PlantedTruth truth;
};

/// Writes tensors and manifests under out_dir (train/, test/,
/// train_manifest.json, test_manifest.json, truth.json). Fully
/// deterministic in (spec, seed).
GeneratedDataset generate_planted(const PlantedSpec& spec, std::size_t n_train,
                                  std::size_t n_test, std::uint64_t seed,
                                  const std::filesystem::path& out_dir);

/// All feature tensors resident in memory; the working representation for
/// training and evaluation.
struct LoadedDataset {
  std::uint32_t num_classes = 0;
  std::array<std::uint32_t, 3> feature_dims{};
  std::vector<Tensor> features;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return features.size(); }
  static LoadedDataset load(const std::filesystem::path& manifest_path);
};

struct Batch {
  Tensor features;  // B x d x H x W
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> indices;
};

/// One epoch of deterministic shuffled batches: every sample appears exactly
/// once, the final batch may be short, and the order is a pure function of
/// the epoch seed.
class BatchIterator {
 public:
  BatchIterator(const LoadedDataset& dataset, std::size_t batch_size,
                std::uint64_t epoch_seed);
  std::optional<Batch> next();

 private:
  const LoadedDataset& dataset_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Nearest-truth-template classifier: unmixes each sample with the known
/// rotation, pools every latent axis, and scores a class by the sum of its
/// assigned concepts' pooled activations. Establishes that the planted
/// dataset is separable before any head is trained.
double truth_template_accuracy(const LoadedDataset& dataset,
                               const PlantedTruth& truth);

}  // namespace side

#endif  // SIDE_DATASET_HPP_
