// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Black-box tests of the installed CLI binary (path injected by CMake).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "side/dataset.hpp"
#include "side/pipeline.hpp"

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(SIDE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

bool trees_identical(const std::filesystem::path& a,
                     const std::filesystem::path& b) {
  std::vector<std::filesystem::path> rel;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) {
      rel.push_back(std::filesystem::relative(e.path(), a));
    }
  }
  for (const auto& r : rel) {
    if (!std::filesystem::exists(b / r)) return false;
    if (slurp(a / r) != slurp(b / r)) return false;
  }
  std::size_t count_b = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) ++count_b;
  }
  return count_b == rel.size();
}

const char* kSpecJson = R"({
  "num_classes": 4, "num_concepts": 6, "concepts_per_class": 2,
  "channel_dim": 8, "height": 4, "width": 4,
  "signal_strength": 5.0, "noise_std": 0.2,
  "mixing_seed": 31, "distractor_rate": 0.0
})";

const char* kConfigJson = R"({
  "head": {"c_prime": 16},
  "stages": {
    "pretrain":  {"epochs": 6, "batch_size": 8, "learning_rate": 1e-3},
    "finetune":  {"epochs": 3, "batch_size": 8, "learning_rate": 1e-4},
    "calibrate": {"epochs": 2, "batch_size": 8, "learning_rate": 1e-4,
                  "ocla": {"lambda": 50}}
  },
  "prune": {"A": 2},
  "seed": 11
})";

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run_cli("synth") == 1);                       // missing required flags
  CHECK(run_cli("synth --spec /nope.json") == 1);     // missing --out
  CHECK(run_cli("bogus-subcommand") == 1);
  CHECK(run_cli("synth --spec /nope.json --out /tmp/x --bad-flag 1") == 1);
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("synth is deterministic and validates its spec") {
  side::testing::TempDir dir("cli_synth");
  const auto spec = dir.path() / "spec.json";
  write_file(spec, kSpecJson);

  const std::string base = "synth --spec " + spec.string() +
                           " --seed 7 --n-train 24 --n-test 12 --out ";
  const auto out_a = dir.path() / "a";
  const auto out_b = dir.path() / "b";
  REQUIRE(run_cli(base + out_a.string()) == 0);
  REQUIRE(run_cli(base + out_b.string()) == 0);
  CHECK(trees_identical(out_a, out_b));

  // generated manifests pass data-module validation
  const side::LoadedDataset data =
      side::LoadedDataset::load(out_a / "train_manifest.json");
  CHECK(data.size() == 24);

  // invalid spec: field-level usage error
  const auto bad = dir.path() / "bad.json";
  write_file(bad, R"({"num_classes": 0})");
  CHECK(run_cli("synth --spec " + bad.string() + " --out " +
                (dir.path() / "c").string()) == 1);
}

TEST_CASE("train, eval, explain, report through the CLI") {
  side::testing::TempDir dir("cli_train");
  const auto spec = dir.path() / "spec.json";
  const auto config = dir.path() / "config.json";
  const auto data = dir.path() / "data";
  write_file(spec, kSpecJson);
  write_file(config, kConfigJson);
  REQUIRE(run_cli("synth --spec " + spec.string() + " --seed 3 --n-train 48" +
                  " --n-test 24 --out " + data.string()) == 0);

  const auto run_a = dir.path() / "run_a";
  const auto base_train = "train --config " + config.string() + " --data " +
                          data.string() + " --out ";
  REQUIRE(run_cli(base_train + run_a.string()) == 0);
  CHECK(std::filesystem::exists(run_a / "ckpt_calibrate" / "header.json"));
  CHECK(std::filesystem::exists(run_a / "trace.csv"));

  SUBCASE("rerun with the same seeds is byte-identical") {
    const auto run_b = dir.path() / "run_b";
    REQUIRE(run_cli(base_train + run_b.string()) == 0);
    CHECK(slurp(run_a / "trace.csv") == slurp(run_b / "trace.csv"));
    CHECK(trees_identical(run_a, run_b));
  }

  SUBCASE("single-stage prune from a resume checkpoint") {
    const auto stage_out = dir.path() / "stage";
    REQUIRE(run_cli(base_train + stage_out.string() +
                    " --stage prune --resume " +
                    (run_a / "ckpt_pretrain").string()) == 0);
    const side::HeadParams pruned =
        side::load_checkpoint(stage_out / "ckpt_prune");
    CHECK(pruned.scores.active_count() == 8);  // A=2 times 4 classes
  }

  SUBCASE("eval echoes its threshold and explain is deterministic") {
    const auto report = dir.path() / "report.json";
    REQUIRE(run_cli("eval --ckpt " + (run_a / "ckpt_calibrate").string() +
                    " --data " + data.string() + " --out " +
                    report.string() + " --threshold 0.9") == 0);
    CHECK(slurp(report).find("\"threshold\": 0.9") != std::string::npos);

    const auto expl_a = dir.path() / "e1.json";
    const auto expl_b = dir.path() / "e2.json";
    const std::string explain_cmd =
        "explain --ckpt " + (run_a / "ckpt_calibrate").string() + " --data " +
        data.string() + " --sample 5 --out ";
    REQUIRE(run_cli(explain_cmd + expl_a.string()) == 0);
    REQUIRE(run_cli(explain_cmd + expl_b.string()) == 0);
    CHECK(slurp(expl_a) == slurp(expl_b));

    // out-of-range sample exits 1
    CHECK(run_cli("explain --ckpt " + (run_a / "ckpt_calibrate").string() +
                  " --data " + data.string() + " --sample 9999 --out " +
                  (dir.path() / "e3.json").string()) == 1);

    // report subcommand summarizes both inputs
    CHECK(run_cli("report --report " + report.string() + " --trace " +
                  (run_a / "trace.csv").string()) == 0);
    CHECK(run_cli("report") == 1);
  }

  SUBCASE("dimension mismatches exit 1") {
    // evaluate a checkpoint against data with different channel count
    const auto spec2 = dir.path() / "spec2.json";
    write_file(spec2, R"({
      "num_classes": 4, "num_concepts": 6, "concepts_per_class": 2,
      "channel_dim": 10, "height": 4, "width": 4,
      "signal_strength": 5.0, "noise_std": 0.2,
      "mixing_seed": 31, "distractor_rate": 0.0
    })");
    const auto data2 = dir.path() / "data2";
    REQUIRE(run_cli("synth --spec " + spec2.string() + " --n-train 8" +
                    " --n-test 8 --out " + data2.string()) == 0);
    CHECK(run_cli("eval --ckpt " + (run_a / "ckpt_calibrate").string() +
                  " --data " + data2.string() + " --out " +
                  (dir.path() / "r2.json").string()) == 1);
  }
}

TEST_CASE("commands do not mutate their input directories") {
  side::testing::TempDir dir("cli_ro");
  const auto spec = dir.path() / "spec.json";
  const auto config = dir.path() / "config.json";
  const auto data = dir.path() / "data";
  write_file(spec, kSpecJson);
  write_file(config, kConfigJson);
  REQUIRE(run_cli("synth --spec " + spec.string() + " --seed 5 --n-train 16" +
                  " --n-test 8 --out " + data.string()) == 0);
  const auto snapshot = dir.path() / "snapshot";
  std::filesystem::copy(data, snapshot,
                        std::filesystem::copy_options::recursive);
  REQUIRE(run_cli("train --config " + config.string() + " --data " +
                  data.string() + " --out " + (dir.path() / "run").string()) ==
          0);
  CHECK(trees_identical(data, snapshot));
}
