// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared-library C surface end to end: synth -> train ->
// eval -> explain, plus handle lifecycles and error reporting.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <string>

#include "oracles.hpp"
#include "side/heads.hpp"
#include "side/pipeline.hpp"
#include "side/side.h"

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kSpecJson = R"({
  "num_classes": 4, "num_concepts": 6, "concepts_per_class": 2,
  "channel_dim": 8, "height": 4, "width": 4,
  "signal_strength": 5.0, "noise_std": 0.2,
  "mixing_seed": 31, "distractor_rate": 0.01
})";

const char* kConfigJson = R"({
  "head": {"c_prime": 16},
  "stages": {
    "pretrain":  {"epochs": 10, "batch_size": 8, "learning_rate": 1e-3},
    "finetune":  {"epochs": 5,  "batch_size": 8, "learning_rate": 1e-4},
    "calibrate": {"epochs": 3,  "batch_size": 8, "learning_rate": 1e-4,
                  "ocla": {"lambda": 50}}
  },
  "prune": {"A": 2},
  "seed": 11
})";

}  // namespace

TEST_CASE("status classification and error reporting") {
  CHECK(side_status_is_usage_error(SIDE_ERR_INVALID_ARGUMENT));
  CHECK(side_status_is_usage_error(SIDE_ERR_FORMAT));
  CHECK(side_status_is_usage_error(SIDE_ERR_DIM_MISMATCH));
  CHECK(side_status_is_usage_error(SIDE_ERR_OUT_OF_RANGE));
  CHECK_FALSE(side_status_is_usage_error(SIDE_OK));
  CHECK_FALSE(side_status_is_usage_error(SIDE_ERR_NUMERIC));
  CHECK_FALSE(side_status_is_usage_error(SIDE_ERR_IO));

  CHECK(side_synth(nullptr, "/tmp/x", 1, 1, 1) == SIDE_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(side_last_error()) > 0);
  CHECK(std::string(side_version()) == "0.1.0");
}

TEST_CASE("workflow through the C API") {
  side::testing::TempDir dir("capi");
  const auto spec_path = dir.path() / "spec.json";
  const auto config_path = dir.path() / "config.json";
  const auto data_dir = dir.path() / "data";
  const auto run_dir = dir.path() / "run";
  write_file(spec_path, kSpecJson);
  write_file(config_path, kConfigJson);

  REQUIRE(side_synth(spec_path.c_str(), data_dir.c_str(), 7, 80, 40) ==
          SIDE_OK);
  REQUIRE(side_train(config_path.c_str(), data_dir.c_str(), run_dir.c_str(),
                     "all", nullptr) == SIDE_OK);

  SUBCASE("artifacts exist") {
    for (const char* name :
         {"ckpt_pretrain", "ckpt_prune", "ckpt_finetune", "ckpt_calibrate"}) {
      CHECK(std::filesystem::exists(run_dir / name / "header.json"));
    }
    CHECK(std::filesystem::exists(run_dir / "trace.csv"));
    CHECK(std::filesystem::exists(run_dir / "report.json"));
  }

  SUBCASE("eval and explain succeed and compose") {
    const auto report_path = dir.path() / "eval.json";
    REQUIRE(side_eval((run_dir / "ckpt_calibrate").c_str(), data_dir.c_str(),
                      "test", report_path.c_str(), 0.0) == SIDE_OK);
    std::ifstream in(report_path);
    nlohmann::json j;
    in >> j;
    CHECK(j.at("threshold").get<double>() == 0.5);
    CHECK(j.at("n_samples").get<int>() == 40);

    const auto expl_path = dir.path() / "expl.json";
    REQUIRE(side_explain((run_dir / "ckpt_calibrate").c_str(),
                         data_dir.c_str(), "test", 3,
                         expl_path.c_str()) == SIDE_OK);
    std::ifstream ein(expl_path);
    nlohmann::json expl;
    ein >> expl;
    CHECK(expl.at("sample_id").get<int>() == 3);
    CHECK(expl.at("activated_classes").is_array());

    // out-of-range sample index is a usage error
    CHECK(side_explain((run_dir / "ckpt_calibrate").c_str(), data_dir.c_str(),
                       "test", 40, expl_path.c_str()) ==
          SIDE_ERR_OUT_OF_RANGE);
  }

  SUBCASE("dataset handle") {
    side_dataset* ds = nullptr;
    REQUIRE(side_dataset_open((data_dir / "train_manifest.json").c_str(),
                              &ds) == SIDE_OK);
    CHECK(side_dataset_num_samples(ds) == 80);
    CHECK(side_dataset_num_classes(ds) == 4);
    uint32_t dims[3] = {0, 0, 0};
    side_dataset_feature_dims(ds, dims);
    CHECK(dims[0] == 8);
    CHECK(dims[1] == 4);
    CHECK(dims[2] == 4);
    side_dataset_close(ds);
  }

  SUBCASE("head handle predicts in parity with the core") {
    side_head* head = nullptr;
    REQUIRE(side_head_load((run_dir / "ckpt_calibrate").c_str(), &head) ==
            SIDE_OK);
    CHECK(std::string(side_head_type(head)) == "side");
    CHECK(side_head_num_classes(head) == 4);
    CHECK(side_head_feature_channels(head) == 8);
    CHECK(side_head_num_prototypes(head) == 16);

    const side::LoadedDataset data =
        side::LoadedDataset::load(data_dir / "test_manifest.json");
    const side::HeadParams params =
        side::load_checkpoint(run_dir / "ckpt_calibrate");
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<double> probs(4);
      REQUIRE(side_head_predict(head, data.features[i].data(),
                                data.features[i].size(), 4, 4, probs.data(),
                                probs.size()) == SIDE_OK);
      const side::HeadOutput out =
          side::head_forward(data.features[i], params);
      for (std::size_t c = 0; c < 4; ++c) CHECK(probs[c] == out.probs[c]);
    }
    // wrong buffer sizes are dimension errors
    std::vector<double> probs(4);
    CHECK(side_head_predict(head, data.features[0].data(), 3, 4, 4,
                            probs.data(), probs.size()) ==
          SIDE_ERR_DIM_MISMATCH);
    side_head_close(head);
  }

  SUBCASE("report rendering") {
    char* text = nullptr;
    REQUIRE(side_report_render(nullptr, (run_dir / "trace.csv").c_str(),
                               &text) == SIDE_OK);
    CHECK(std::string(text).find("pretrain") != std::string::npos);
    side_string_free(text);
    CHECK(side_report_render(nullptr, nullptr, &text) ==
          SIDE_ERR_INVALID_ARGUMENT);
  }

  SUBCASE("single-stage training with resume") {
    const auto stage_dir = dir.path() / "stage_run";
    REQUIRE(side_train(config_path.c_str(), data_dir.c_str(),
                       stage_dir.c_str(), "prune",
                       (run_dir / "ckpt_pretrain").c_str()) == SIDE_OK);
    const side::HeadParams pruned =
        side::load_checkpoint(stage_dir / "ckpt_prune");
    // A = 2 over 4 classes -> 8 active weights
    CHECK(pruned.scores.active_count() == 8);
    // finetune and calibrate require a resume checkpoint
    CHECK(side_train(config_path.c_str(), data_dir.c_str(), stage_dir.c_str(),
                     "finetune", nullptr) == SIDE_ERR_INVALID_ARGUMENT);
  }
}

TEST_CASE("infodisent baseline through the C API") {
  side::testing::TempDir dir("capib");
  const auto spec_path = dir.path() / "spec.json";
  const auto config_path = dir.path() / "config.json";
  const auto data_dir = dir.path() / "data";
  const auto run_dir = dir.path() / "run";
  write_file(spec_path, kSpecJson);
  write_file(config_path, R"({
    "head": {"type": "infodisent"},
    "stages": {"pretrain": {"epochs": 4, "batch_size": 8,
                            "learning_rate": 1e-3}},
    "seed": 9
  })");
  REQUIRE(side_synth(spec_path.c_str(), data_dir.c_str(), 3, 40, 20) ==
          SIDE_OK);
  REQUIRE(side_train(config_path.c_str(), data_dir.c_str(), run_dir.c_str(),
                     "all", nullptr) == SIDE_OK);
  // baseline pipeline ends at pretraining
  CHECK(std::filesystem::exists(run_dir / "ckpt_pretrain" / "header.json"));
  CHECK_FALSE(std::filesystem::exists(run_dir / "ckpt_prune"));

  const auto report_path = dir.path() / "eval.json";
  REQUIRE(side_eval((run_dir / "ckpt_pretrain").c_str(), data_dir.c_str(),
                    "test", report_path.c_str(), 0.0) == SIDE_OK);
  std::ifstream in(report_path);
  nlohmann::json j;
  in >> j;
  // dense positive weights: every prediction uses all d prototypes
  CHECK(j.at("local_size_mean").get<double>() == 8.0);
}
