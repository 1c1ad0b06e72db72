// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

// cbr: synthetic data generation, two-stage training, cascaded inference,
// evaluation and ablations.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cbr/error.hpp"
#include "cbr/experiment.hpp"

namespace {

void add_settings(CLI::App& app, cbr::ExperimentConfig& c, std::string& data_dir, std::string& out_dir) {
  app.add_option("--data,--data_dir", data_dir, "Dataset directory")->capture_default_str();
  app.add_option("--out,--out_dir", out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();

  auto* synth = "Synthetic data";
  app.add_option("--num_videos", c.num_videos)->group(synth)->capture_default_str();
  app.add_option("--units_min", c.units_min)->group(synth)->capture_default_str();
  app.add_option("--units_max", c.units_max)->group(synth)->capture_default_str();
  app.add_option("--dim", c.dim)->group(synth)->capture_default_str();
  app.add_option("--n_classes", c.n_classes)->group(synth)->capture_default_str();
  app.add_option("--instances_min", c.instances_min)->group(synth)->capture_default_str();
  app.add_option("--instances_max", c.instances_max)->group(synth)->capture_default_str();
  app.add_option("--instance_length_min", c.instance_length_min)->group(synth)->capture_default_str();
  app.add_option("--instance_length_max", c.instance_length_max)->group(synth)->capture_default_str();
  app.add_option("--signal_strength", c.signal_strength)->group(synth)->capture_default_str();
  app.add_option("--noise_sigma", c.noise_sigma)->group(synth)->capture_default_str();
  app.add_option("--test_fraction", c.test_fraction)->group(synth)->capture_default_str();

  auto* model = "Windows and model";
  app.add_option("--window_scales", c.window_scales, "Scales as L(S) in frames")->group(model)->capture_default_str();
  app.add_option("--n_ctx", c.n_ctx)->group(model)->capture_default_str();
  app.add_option("--offset-scheme,--offset_scheme", c.offset_scheme, "param | frame | unit")
      ->group(model)
      ->capture_default_str();
  app.add_option("--hidden_dims", c.hidden_dims)->group(model)->capture_default_str();
  app.add_option("--learning_rate", c.learning_rate)->group(model)->capture_default_str();
  app.add_option("--batch_size", c.batch_size)->group(model)->capture_default_str();
  app.add_option("--lambda", c.lambda)->group(model)->capture_default_str();
  app.add_option("--background_ratio", c.background_ratio)->group(model)->capture_default_str();
  app.add_option("--proposal_epochs", c.proposal_epochs)->group(model)->capture_default_str();
  app.add_option("--detection_epochs", c.detection_epochs)->group(model)->capture_default_str();

  auto* cascade = "Cascade";
  app.add_option("--k-proposal,--k_proposal", c.k_proposal)->group(cascade)->capture_default_str();
  app.add_option("--k-detection,--k_detection", c.k_detection)->group(cascade)->capture_default_str();
  app.add_option("--theta", c.theta)->group(cascade)->capture_default_str();
  app.add_option("--nms_tiou", c.nms_tiou)->group(cascade)->capture_default_str();
  app.add_option("--proposal_nms_tiou", c.proposal_nms_tiou)->group(cascade)->capture_default_str();

  auto* eval = "Evaluation";
  app.add_option("--map_tious", c.map_tious)->group(eval)->capture_default_str();
  app.add_option("--ar_tiou", c.ar_tiou)->group(eval)->capture_default_str();
  app.add_option("--an_values", c.an_values)->group(eval)->capture_default_str();
  app.add_option("--frequency", c.frequency)->group(eval)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded boundary regression for temporal action detection"};
  app.set_config("--config", "", "Experiment config file (key = value)");
  app.fallthrough();
  app.require_subcommand(1);

  cbr::ExperimentConfig cfg;
  std::string data_dir = cfg.data_dir.string();
  std::string out_dir = cfg.out_dir.string();
  add_settings(app, cfg, data_dir, out_dir);

  std::string stage_name;
  int epochs = -1;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Train one stage");
  train->add_option("--stage", stage_name, "proposal | detection")->required();
  train->add_option("--epochs", epochs, "Override the stage's epoch count");
  auto* infer = app.add_subcommand("infer", "Windows -> proposals -> detections on the test split");
  std::string task_name;
  auto* eval = app.add_subcommand("eval", "Evaluate proposals or detections");
  eval->add_option("--task", task_name, "proposal | detection")->required();
  auto* ablate_offsets = app.add_subcommand("ablate-offsets", "Compare offset schemes and no regression");
  std::vector<int> k_values{1, 2, 3, 4};
  auto* ablate_cascade = app.add_subcommand("ablate-cascade", "Sweep cascade depths");
  ablate_cascade->add_option("--k-values", k_values, "Cascade depths to sweep")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.data_dir = data_dir;
    cfg.out_dir = out_dir;
    auto parse_stage = [](const std::string& name, const char* flag) {
      const auto s = cbr::parse_stage(name);
      if (!s) throw cbr::ValidationError(std::string(flag) + ": expected proposal or detection, got '" + name + "'");
      return *s;
    };
    if (*train) {
      const auto stage = parse_stage(stage_name, "stage");
      if (epochs >= 0) (stage == cbr::Stage::Proposal ? cfg.proposal_epochs : cfg.detection_epochs) = epochs;
      cfg.validate();
      cbr::command_train(cfg, stage);
    } else if (*gen) {
      cfg.validate();
      cbr::command_gen_data(cfg);
    } else if (*infer) {
      cfg.validate();
      cbr::command_infer(cfg);
    } else if (*eval) {
      const auto task = parse_stage(task_name, "task");
      cfg.validate();
      cbr::command_eval(cfg, task);
    } else if (*ablate_offsets) {
      cfg.validate();
      cbr::command_ablate_offsets(cfg);
    } else if (*ablate_cascade) {
      cfg.validate();
      cbr::command_ablate_cascade(cfg, k_values);
    }
  } catch (const cbr::ValidationError& e) {
    std::cerr << "cbr: validation error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "cbr: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
