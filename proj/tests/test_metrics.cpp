// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "oracles.hpp"
#include "side/dataset.hpp"
#include "side/error.hpp"
#include "side/metrics.hpp"

using namespace side;

namespace {

/// Random sheet shaped like a lightly trained one: mixed signs, some masked.
HeadParams random_sheet_head(Rng& rng, std::size_t classes, std::size_t cp) {
  HeadParams p = init_side_head(4, cp, classes, rng.next_u64());
  for (std::size_t i = 0; i < p.scores.w.size(); ++i) {
    p.scores.w[i] = rng.uniform(-1.0, 2.0);
    if (rng.bernoulli(0.2)) p.scores.mask[i] = 0;
  }
  p.scores.enforce_mask();
  return p;
}

}  // namespace

TEST_CASE("accuracy") {
  SUBCASE("perfect predictions") {
    const Tensor p({2, 2}, {0.9, 0.1, 0.2, 0.8});
    const std::vector<std::uint32_t> y{0, 1};
    CHECK(accuracy(p, y) == 1.0);
  }
  SUBCASE("half right") {
    const Tensor p({2, 2}, {0.2, 0.8, 0.6, 0.4});
    const std::vector<std::uint32_t> y{1, 1};
    CHECK(accuracy(p, y) == 0.5);
  }
  SUBCASE("ties break to the lowest class index") {
    const Tensor p({1, 3}, {0.4, 0.4, 0.4});
    const std::vector<std::uint32_t> y{0};
    CHECK(accuracy(p, y) == 1.0);
  }
  SUBCASE("empty input is rejected") {
    Tensor p({1, 2});
    std::vector<std::uint32_t> y;
    CHECK_THROWS_AS(accuracy(p, y), Error);
  }
}

TEST_CASE("global_size") {
  SUBCASE("all-masked sheet") {
    HeadParams p = init_side_head(2, 4, 2, 1);
    std::fill(p.scores.mask.begin(), p.scores.mask.end(), 0);
    p.scores.enforce_mask();
    CHECK(global_size(p) == 0);
  }
  SUBCASE("post-prune column scan") {
    HeadParams p = init_side_head(2, 3, 2, 1);
    p.scores.w = Tensor({2, 3}, {0.0, 1.2, 0.0, 0.0, 0.0, 2.0});
    CHECK(global_size(p) == 2);
  }
  SUBCASE("fresh init activates essentially every prototype") {
    const HeadParams p = init_side_head(8, 64, 10, 3);
    CHECK(global_size(p) == 64);
  }
}

TEST_CASE("local_size") {
  HeadParams p = init_side_head(2, 6, 3, 5);
  // class 0 -> {1,2,3}, class 1 -> {3,4}, class 2 -> {5}
  p.scores.w.fill(0.0);
  p.scores.w(0, 1) = 1.0;
  p.scores.w(0, 2) = 1.0;
  p.scores.w(0, 3) = 1.0;
  p.scores.w(1, 3) = 1.0;
  p.scores.w(1, 4) = 1.0;
  p.scores.w(2, 5) = 1.0;
  const ActiveSets sets = ActiveSets::from(p);
  HeadOutput out;
  out.pooled = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  out.pool.resize(6);

  SUBCASE("single activated class") {
    out.probs = Tensor({3}, {0.9, 0.1, 0.1});
    CHECK(local_size(out, sets, 0.5) == 3);
  }
  SUBCASE("two activated classes take the union") {
    out.probs = Tensor({3}, {0.9, 0.8, 0.1});
    CHECK(local_size(out, sets, 0.5) == 4);
  }
  SUBCASE("fallback to the argmax class") {
    out.probs = Tensor({3}, {0.2, 0.1, 0.3});
    CHECK(local_size(out, sets, 0.5) == 1);
  }
  SUBCASE("min_activation filters low pooled values") {
    out.probs = Tensor({3}, {0.9, 0.1, 0.1});
    out.pooled = {1.0, 0.05, 1.0, 1.0, 1.0, 1.0};
    CHECK(local_size(out, sets, 0.5, 0.1) == 2);
  }
}

TEST_CASE("local and global size match brute-force enumeration") {
  Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng.below(5);
    const std::size_t cp = 3 + rng.below(10);
    const HeadParams p = random_sheet_head(rng, classes, cp);
    const ActiveSets sets = ActiveSets::from(p);
    CHECK(sets.global_size() == testing::global_size_oracle(p));
    HeadOutput out;
    out.pooled.assign(cp, 1.0);
    out.pool.resize(cp);
    out.probs = Tensor({classes});
    for (std::size_t c = 0; c < classes; ++c) {
      out.probs[c] = rng.uniform(0.0, 1.0);
    }
    const double t = rng.uniform(0.2, 0.8);
    CHECK(local_size(out, sets, t) ==
          testing::local_size_oracle(p, out.probs.values(), t));
  }
}

TEST_CASE("local_size <= global_size <= prototype count") {
  Rng rng(73);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng.below(4);
    const std::size_t cp = 3 + rng.below(8);
    const HeadParams p = random_sheet_head(rng, classes, cp);
    const ActiveSets sets = ActiveSets::from(p);
    HeadOutput out;
    out.pooled.assign(cp, 1.0);
    out.pool.resize(cp);
    out.probs = Tensor({classes});
    for (std::size_t c = 0; c < classes; ++c) {
      out.probs[c] = rng.uniform(0.0, 1.0);
    }
    const std::size_t local = local_size(out, sets, 0.5);
    const std::size_t global = sets.global_size();
    CHECK(local <= global);
    CHECK(global <= cp);
  }
}

TEST_CASE("explanations reconstruct logits") {
  Rng rng(79);
  SUBCASE("single active prototype") {
    HeadParams p = init_side_head(2, 3, 2, 7);
    p.scores.w.fill(0.0);
    p.scores.w(0, 1) = 0.8;
    p.scores.w(1, 2) = 0.5;
    const Tensor features = testing::random_tensor(rng, {2, 2, 2}, -2.0, 2.0);
    const Explanation expl = explain(3, features, p, 0.5);
    const HeadOutput out = side_forward(features, p);
    for (const ClassExplanation& ce : expl.activated_classes) {
      REQUIRE(ce.prototypes.size() == 1);
      CHECK(ce.prototypes[0].contribution ==
            doctest::Approx(out.logits[ce.class_index]).epsilon(1e-12));
    }
  }
  SUBCASE("random heads reconstruct within 1e-9") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t classes = 2 + rng.below(4);
      const std::size_t cp = 3 + rng.below(8);
      HeadParams p = random_sheet_head(rng, classes, cp);
      const Tensor features =
          testing::random_tensor(rng, {4, 3, 3}, -2.0, 2.0);
      const HeadOutput out = side_forward(features, p);
      const Explanation expl = explain(trial, features, p, 0.5);
      for (const ClassExplanation& ce : expl.activated_classes) {
        double sum = 0.0;
        for (const PrototypeAttribution& a : ce.prototypes) {
          sum += a.contribution;
        }
        CHECK(std::abs(sum - out.logits[ce.class_index]) < 1e-9);
      }
    }
  }
  SUBCASE("contributions are sorted descending") {
    const HeadParams p = random_sheet_head(rng, 3, 8);
    const Tensor features = testing::random_tensor(rng, {4, 3, 3}, -2.0, 2.0);
    const Explanation expl = explain(0, features, p, 0.5);
    for (const ClassExplanation& ce : expl.activated_classes) {
      for (std::size_t i = 1; i < ce.prototypes.size(); ++i) {
        CHECK(ce.prototypes[i - 1].contribution >=
              ce.prototypes[i].contribution);
      }
    }
  }
}

TEST_CASE("weight histogram") {
  SUBCASE("empty active set yields zero counts") {
    HeadParams p = init_side_head(2, 4, 2, 1);
    p.scores.w.fill(-1.0);
    const Histogram h = weight_histogram(p, 8);
    CHECK(h.counts.size() == 8);
    for (std::size_t c : h.counts) CHECK(c == 0);
  }
  SUBCASE("uniform weights land in a single bin") {
    HeadParams p = init_side_head(2, 4, 2, 1);
    p.scores.w.fill(1.0);
    const Histogram h = weight_histogram(p, 8);
    std::size_t nonzero = 0;
    for (std::size_t c : h.counts) nonzero += c > 0 ? 1 : 0;
    CHECK(nonzero == 1);
  }
  SUBCASE("totals are conserved") {
    Rng rng(83);
    const HeadParams p = random_sheet_head(rng, 4, 9);
    const Histogram h = weight_histogram(p, 6);
    const std::size_t total =
        std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0});
    CHECK(total == ActiveSets::from(p).active_weights());
  }
}

TEST_CASE("report emission") {
  testing::TempDir dir("report");
  PlantedSpec spec;
  spec.num_classes = 3;
  spec.num_concepts = 4;
  spec.concepts_per_class = 2;
  spec.channel_dim = 6;
  spec.height = 3;
  spec.width = 3;
  spec.signal_strength = 4.0;
  spec.noise_std = 0.1;
  spec.mixing_seed = 2;
  spec.distractor_rate = 0.0;
  generate_planted(spec, 12, 6, 4, dir.path());
  const LoadedDataset data =
      LoadedDataset::load(dir.path() / "test_manifest.json");
  const HeadParams p = init_side_head(6, 12, 3, 17);
  const EvalReport report = evaluate(p, data, 0.5);
  const auto report_path = dir.path() / "report.json";
  emit_report(report, report_path);

  SUBCASE("JSON round-trips all scalar fields exactly") {
    std::ifstream in(report_path);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("accuracy").get<double>() == report.accuracy);
    CHECK(j.at("ocla").get<double>() == report.ocla);
    CHECK(j.at("global_size").get<std::size_t>() == report.global_size);
    CHECK(j.at("local_size_mean").get<double>() == report.local_size_mean);
    CHECK(j.at("n_samples").get<std::size_t>() == report.n_samples);
    CHECK(j.at("threshold").get<double>() == report.threshold);
  }
  SUBCASE("per-sample CSV has one row per sample and a matching mean") {
    std::ifstream in(dir.path() / "report_local_sizes.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample,local_size");
    double total = 0.0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      total += std::stod(line.substr(comma + 1));
      ++rows;
    }
    CHECK(rows == report.n_samples);
    CHECK(std::abs(total / static_cast<double>(rows) -
                   report.local_size_mean) < 1e-9);
  }
  SUBCASE("histogram CSV totals match the active count") {
    std::ifstream in(dir.path() / "report_histogram.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "bin_lo,bin_hi,count");
    std::size_t total = 0;
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      total += std::stoul(line.substr(last + 1));
    }
    CHECK(total == ActiveSets::from(p).active_weights());
  }
  SUBCASE("re-emission is byte-identical") {
    std::ifstream a(report_path, std::ios::binary);
    const std::string first((std::istreambuf_iterator<char>(a)),
                            std::istreambuf_iterator<char>());
    emit_report(report, report_path);
    std::ifstream b(report_path, std::ios::binary);
    const std::string second((std::istreambuf_iterator<char>(b)),
                             std::istreambuf_iterator<char>());
    CHECK(first == second);
  }
}

TEST_CASE("dense baseline head reports local size equal to prototype count") {
  testing::TempDir dir("dense");
  PlantedSpec spec;
  spec.num_classes = 4;
  spec.num_concepts = 5;
  spec.concepts_per_class = 2;
  spec.channel_dim = 8;
  spec.height = 3;
  spec.width = 3;
  spec.signal_strength = 4.0;
  spec.noise_std = 0.1;
  spec.mixing_seed = 21;
  spec.distractor_rate = 0.0;
  generate_planted(spec, 16, 8, 9, dir.path());
  const LoadedDataset data =
      LoadedDataset::load(dir.path() / "test_manifest.json");
  const HeadParams p = init_infodisent_head(8, 4, 33);
  const EvalReport report = evaluate(p, data, 0.5);
  CHECK(report.local_size_mean == 8.0);
  for (std::size_t ls : report.local_sizes) CHECK(ls == 8);
}
