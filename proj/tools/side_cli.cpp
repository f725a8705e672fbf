// Copyright 2026 The SIDE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Links only the C API; all functionality lives in
// the shared library.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <string>

#include "side/side.h"

namespace {

int finish(int status) {
  if (status == SIDE_OK) return 0;
  std::fprintf(stderr, "error: %s\n", side_last_error());
  return side_status_is_usage_error(status) ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SIDE: sparse interpretable classification heads"};
  app.require_subcommand(1);
  app.set_version_flag("--version", side_version());

  std::string spec_path, out_dir, config_path, data_dir, stage = "all";
  std::string resume_ckpt, ckpt_dir, report_path, trace_path, split = "test";
  std::uint64_t seed = 0;
  std::uint32_t n_train = 1000, n_test = 200;
  std::uint64_t sample_index = 0;
  double threshold = 0.0;

  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a planted-concept synthetic dataset");
  synth->add_option("--spec", spec_path, "Planted spec JSON file")
      ->required();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", seed, "Generation seed");
  synth->add_option("--n-train", n_train, "Training sample count");
  synth->add_option("--n-test", n_test, "Test sample count");

  CLI::App* train =
      app.add_subcommand("train", "Run the staged training pipeline");
  train->add_option("--config", config_path, "Pipeline config JSON file")
      ->required();
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--stage", stage,
                    "pretrain | prune | finetune | calibrate | all")
      ->check(CLI::IsMember(
          {"pretrain", "prune", "finetune", "calibrate", "all"}));
  train->add_option("--resume", resume_ckpt, "Checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out", report_path, "Report JSON path")->required();
  eval->add_option("--threshold", threshold, "Activation threshold");
  eval->add_option("--split", split, "train | test");

  CLI::App* explain =
      app.add_subcommand("explain", "Export one sample's explanation");
  explain->add_option("--ckpt", ckpt_dir, "Checkpoint directory")->required();
  explain->add_option("--data", data_dir, "Dataset directory")->required();
  explain->add_option("--sample", sample_index, "Sample index")->required();
  explain->add_option("--out", report_path, "Explanation JSON path")
      ->required();
  explain->add_option("--split", split, "train | test");

  CLI::App* report =
      app.add_subcommand("report", "Summarize a report and/or trace");
  report->add_option("--report", report_path, "Evaluation report JSON");
  report->add_option("--trace", trace_path, "Training trace CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (synth->parsed()) {
    return finish(side_synth(spec_path.c_str(), out_dir.c_str(), seed,
                             n_train, n_test));
  }
  if (train->parsed()) {
    return finish(side_train(config_path.c_str(), data_dir.c_str(),
                             out_dir.c_str(), stage.c_str(),
                             resume_ckpt.empty() ? nullptr
                                                 : resume_ckpt.c_str()));
  }
  if (eval->parsed()) {
    return finish(side_eval(ckpt_dir.c_str(), data_dir.c_str(), split.c_str(),
                            report_path.c_str(), threshold));
  }
  if (explain->parsed()) {
    return finish(side_explain(ckpt_dir.c_str(), data_dir.c_str(),
                               split.c_str(), sample_index,
                               report_path.c_str()));
  }
  if (report->parsed()) {
    char* text = nullptr;
    const int status = side_report_render(
        report_path.empty() ? nullptr : report_path.c_str(),
        trace_path.empty() ? nullptr : trace_path.c_str(), &text);
    if (status == SIDE_OK) {
      std::fputs(text, stdout);
      side_string_free(text);
    }
    return finish(status);
  }
  return 1;
}
