// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "side/dataset.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "side/error.hpp"
#include "side/io.hpp"
#include "side/rng.hpp"

namespace side {

namespace {

using nlohmann::json;

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::invalid_argument,
          "cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format, "invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::io,
          "cannot open for writing: " + path.string());
  out << text;
  out.flush();
  require(out.good(), ErrorCode::io, "write failed: " + path.string());
}

template <class T>
T get_field(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) {
    fail(ErrorCode::invalid_argument, ctx + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::invalid_argument, ctx + ": bad value for field '" +
                                          std::string(key) + "'");
  }
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  DatasetManifest m;
  m.num_classes = get_field<std::uint32_t>(j, "num_classes", "manifest");
  const auto dims =
      get_field<std::vector<std::uint32_t>>(j, "feature_dims", "manifest");
  require(dims.size() == 3, ErrorCode::invalid_argument,
          "manifest: feature_dims must have 3 entries");
  std::copy(dims.begin(), dims.end(), m.feature_dims.begin());
  if (!j.contains("samples") || !j.at("samples").is_array()) {
    fail(ErrorCode::invalid_argument, "manifest: missing samples array");
  }
  for (const json& s : j.at("samples")) {
    ManifestEntry e;
    e.path = get_field<std::string>(s, "path", "manifest sample");
    e.label = get_field<std::uint32_t>(s, "label", "manifest sample");
    require(e.label < m.num_classes, ErrorCode::invalid_argument,
            "manifest: label out of range in " + e.path);
    m.samples.push_back(std::move(e));
  }
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  json j;
  j["num_classes"] = num_classes;
  j["feature_dims"] = feature_dims;
  json samples_json = json::array();
  for (const ManifestEntry& e : samples) {
    samples_json.push_back({{"path", e.path}, {"label", e.label}});
  }
  j["samples"] = std::move(samples_json);
  write_text_file(path, j.dump(2) + "\n");
}

void PlantedSpec::validate() const {
  require(num_classes >= 1, ErrorCode::invalid_argument,
          "planted spec: num_classes must be >= 1");
  require(channel_dim >= 1, ErrorCode::invalid_argument,
          "planted spec: channel_dim must be >= 1");
  require(num_concepts >= 1 && num_concepts <= channel_dim,
          ErrorCode::invalid_argument,
          "planted spec: num_concepts must be in [1, channel_dim]");
  require(concepts_per_class >= 1 && concepts_per_class <= num_concepts,
          ErrorCode::invalid_argument,
          "planted spec: concepts_per_class must be in [1, num_concepts]");
  require(height >= 1 && width >= 1, ErrorCode::invalid_argument,
          "planted spec: spatial dims must be >= 1");
  require(signal_strength > 0.0, ErrorCode::invalid_argument,
          "planted spec: signal_strength must be > 0");
  require(noise_std >= 0.0, ErrorCode::invalid_argument,
          "planted spec: noise_std must be >= 0");
  require(distractor_rate >= 0.0 && distractor_rate <= 1.0,
          ErrorCode::invalid_argument,
          "planted spec: distractor_rate must be in [0, 1]");
}

PlantedSpec PlantedSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::format, std::string("invalid planted spec JSON: ") + e.what());
  }
  PlantedSpec s;
  s.num_classes = get_field<std::uint32_t>(j, "num_classes", "planted spec");
  s.num_concepts = get_field<std::uint32_t>(j, "num_concepts", "planted spec");
  s.concepts_per_class =
      get_field<std::uint32_t>(j, "concepts_per_class", "planted spec");
  s.channel_dim = get_field<std::uint32_t>(j, "channel_dim", "planted spec");
  s.height = get_field<std::uint32_t>(j, "height", "planted spec");
  s.width = get_field<std::uint32_t>(j, "width", "planted spec");
  s.signal_strength =
      get_field<double>(j, "signal_strength", "planted spec");
  s.noise_std = get_field<double>(j, "noise_std", "planted spec");
  s.mixing_seed = get_field<std::uint64_t>(j, "mixing_seed", "planted spec");
  s.distractor_rate = get_field<double>(j, "distractor_rate", "planted spec");
  s.validate();
  return s;
}

PlantedSpec PlantedSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::invalid_argument,
          "cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

PlantedTruth PlantedTruth::load(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  PlantedTruth t;
  t.class_concepts = get_field<std::vector<std::vector<std::uint32_t>>>(
      j, "class_concepts", "truth");
  t.mixing_seed = get_field<std::uint64_t>(j, "mixing_seed", "truth");
  return t;
}

void PlantedTruth::save(const std::filesystem::path& path) const {
  json j;
  j["class_concepts"] = class_concepts;
  j["mixing_seed"] = mixing_seed;
  write_text_file(path, j.dump(2) + "\n");
}

Tensor mixing_matrix(std::uint64_t seed, std::size_t dim) {
  using Matrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Rng rng(Rng::mix(seed, 0x6d6978));
  Matrix gauss(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) gauss(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(gauss);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().template triangularView<Eigen::Upper>();
  // Fix the QR sign ambiguity, then force det +1 so the rotation stays
  // reachable by a Cayley-parameterized map.
  for (std::size_t j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  if (q.determinant() < 0.0) q.col(dim - 1) = -q.col(dim - 1);
  Tensor m({dim, dim});
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = q(i, j);
  }
  return m;
}

namespace {

std::string sample_filename(std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "sample_%05zu.sidt", index);
  return buf;
}

/// Latent-space sample assembly; the RNG call order below is part of the
/// generator's determinism contract.
Tensor make_sample(const PlantedSpec& spec,
                   const std::vector<std::uint32_t>& concepts, Rng& rng) {
  const std::size_t d = spec.channel_dim;
  const std::size_t hw = static_cast<std::size_t>(spec.height) * spec.width;
  Tensor latent({d, spec.height, spec.width});
  for (std::uint32_t g : concepts) {
    const std::size_t cell = rng.below(hw);
    const double magnitude =
        rng.normal(spec.signal_strength, 0.1 * spec.signal_strength);
    latent[g * hw + cell] = magnitude;
  }
  for (std::uint32_t g = 0; g < spec.num_concepts; ++g) {
    if (std::find(concepts.begin(), concepts.end(), g) != concepts.end()) {
      continue;
    }
    if (spec.distractor_rate > 0.0 && rng.bernoulli(spec.distractor_rate)) {
      const std::size_t cell = rng.below(hw);
      latent[g * hw + cell] =
          rng.normal(spec.signal_strength, 0.1 * spec.signal_strength);
    }
  }
  if (spec.noise_std > 0.0) {
    for (std::size_t i = 0; i < latent.size(); ++i) {
      latent[i] += rng.normal(0.0, spec.noise_std);
    }
  }
  return latent;
}

DatasetManifest generate_split(const PlantedSpec& spec,
                               const PlantedTruth& truth, const Tensor& mixing,
                               std::size_t count, Rng& rng,
                               const std::filesystem::path& out_dir,
                               const std::string& split) {
  DatasetManifest manifest;
  manifest.num_classes = spec.num_classes;
  manifest.feature_dims = {spec.channel_dim, spec.height, spec.width};
  std::filesystem::create_directories(out_dir / split);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t label =
        static_cast<std::uint32_t>(i % spec.num_classes);
    const Tensor latent =
        make_sample(spec, truth.class_concepts[label], rng);
    const Tensor mixed = channel_project(latent, mixing);
    const std::string rel = split + "/" + sample_filename(i);
    write_tensor(out_dir / rel, mixed, DType::f32);
    manifest.samples.push_back({rel, label});
  }
  return manifest;
}

}  // namespace

GeneratedDataset generate_planted(const PlantedSpec& spec, std::size_t n_train,
                                  std::size_t n_test, std::uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  spec.validate();
  require(n_train >= 1 && n_test >= 1, ErrorCode::invalid_argument,
          "planted generator: sample counts must be >= 1");
  std::filesystem::create_directories(out_dir);

  GeneratedDataset out;
  out.truth.mixing_seed = spec.mixing_seed;
  Rng assign_rng(Rng::mix(seed, 0));
  out.truth.class_concepts.resize(spec.num_classes);
  for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
    // Sample A* distinct concepts per class; classes may share concepts.
    std::vector<std::uint32_t> pool(spec.num_concepts);
    for (std::uint32_t g = 0; g < spec.num_concepts; ++g) pool[g] = g;
    assign_rng.shuffle(pool);
    pool.resize(spec.concepts_per_class);
    std::sort(pool.begin(), pool.end());
    out.truth.class_concepts[c] = std::move(pool);
  }

  const Tensor mixing = mixing_matrix(spec.mixing_seed, spec.channel_dim);
  Rng train_rng(Rng::mix(seed, 1));
  Rng test_rng(Rng::mix(seed, 2));
  out.train = generate_split(spec, out.truth, mixing, n_train, train_rng,
                             out_dir, "train");
  out.test = generate_split(spec, out.truth, mixing, n_test, test_rng,
                            out_dir, "test");
  out.train.save(out_dir / "train_manifest.json");
  out.test.save(out_dir / "test_manifest.json");
  out.truth.save(out_dir / "truth.json");
  return out;
}

LoadedDataset LoadedDataset::load(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = DatasetManifest::load(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  LoadedDataset ds;
  ds.num_classes = manifest.num_classes;
  ds.feature_dims = manifest.feature_dims;
  ds.features.reserve(manifest.samples.size());
  ds.labels.reserve(manifest.samples.size());
  for (const ManifestEntry& e : manifest.samples) {
    Tensor t = read_tensor(base / e.path);
    require(t.rank() == 3 && t.dim(0) == manifest.feature_dims[0] &&
                t.dim(1) == manifest.feature_dims[1] &&
                t.dim(2) == manifest.feature_dims[2],
            ErrorCode::dim_mismatch,
            "sample dims do not match manifest feature_dims: " + e.path);
    ds.features.push_back(std::move(t));
    ds.labels.push_back(e.label);
  }
  return ds;
}

BatchIterator::BatchIterator(const LoadedDataset& dataset,
                             std::size_t batch_size, std::uint64_t epoch_seed)
    : dataset_(dataset), batch_size_(batch_size) {
  require(batch_size >= 1, ErrorCode::invalid_argument,
          "batch size must be >= 1");
  require(dataset.size() >= 1, ErrorCode::invalid_argument,
          "cannot iterate an empty dataset");
  order_.resize(dataset.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  Rng rng(epoch_seed);
  rng.shuffle(order_);
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t count = std::min(batch_size_, order_.size() - cursor_);
  const auto& dims = dataset_.feature_dims;
  const std::size_t sample_size =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  Batch batch;
  batch.features = Tensor({count, dims[0], dims[1], dims[2]});
  batch.labels.resize(count);
  batch.indices.resize(count);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t idx = order_[cursor_ + b];
    batch.indices[b] = idx;
    batch.labels[b] = dataset_.labels[idx];
    std::copy_n(dataset_.features[idx].data(), sample_size,
                batch.features.data() + b * sample_size);
  }
  cursor_ += count;
  return batch;
}

double truth_template_accuracy(const LoadedDataset& dataset,
                               const PlantedTruth& truth) {
  require(dataset.size() >= 1, ErrorCode::invalid_argument,
          "truth_template_accuracy: empty dataset");
  const std::size_t d = dataset.feature_dims[0];
  const std::size_t hw =
      static_cast<std::size_t>(dataset.feature_dims[1]) *
      dataset.feature_dims[2];
  const Tensor mixing = mixing_matrix(truth.mixing_seed, d);
  std::size_t correct = 0;
  std::vector<double> channel(hw);
  std::vector<double> pooled(d);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor& x = dataset.features[i];
    // Unmix with M^T (orthogonal inverse), one latent axis at a time.
    for (std::size_t g = 0; g < d; ++g) {
      std::fill(channel.begin(), channel.end(), 0.0);
      for (std::size_t k = 0; k < d; ++k) {
        const double m = mixing(k, g);
        const double* row = x.data() + k * hw;
        for (std::size_t s = 0; s < hw; ++s) channel[s] += m * row[s];
      }
      pooled[g] = mxpool(std::span<const double>(channel));
    }
    std::size_t best_class = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < truth.class_concepts.size(); ++c) {
      double score = 0.0;
      for (std::uint32_t g : truth.class_concepts[c]) score += pooled[g];
      if (score > best_score) {
        best_score = score;
        best_class = c;
      }
    }
    if (best_class == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace side
