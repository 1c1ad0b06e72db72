// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbr/cascade.hpp"
#include "cbr/eval.hpp"
#include "cbr/nnet.hpp"
#include "cbr/synth.hpp"

namespace cbr {

/// Flat experiment settings, one field per config-file key. Typed
/// sub-configurations are derived on demand; validate() names the offending
/// key in its ValidationError.
struct ExperimentConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 7;

  // synthetic data
  int num_videos = 20;
  int units_min = 160;
  int units_max = 240;
  int dim = 16;
  int n_classes = 3;
  int instances_min = 2;
  int instances_max = 4;
  int instance_length_min = 4;
  int instance_length_max = 24;
  double signal_strength = 4.0;
  double noise_sigma = 1.0;
  double test_fraction = 0.5;

  // windows, pooling, targets
  std::vector<std::string> window_scales{"16(16)", "32(16)", "64(16)", "128(32)", "256(64)"};
  int n_ctx = 4;
  std::string offset_scheme = "unit";

  // model and training
  std::vector<std::size_t> hidden_dims{1000};
  double learning_rate = 0.005;
  std::size_t batch_size = 128;
  double lambda = 2.0;
  double background_ratio = 10.0;
  int proposal_epochs = 30;
  int detection_epochs = 30;

  // inference
  int k_proposal = 3;
  int k_detection = 2;
  double theta = 0.1;
  double nms_tiou = 0.5;
  double proposal_nms_tiou = 0.7;

  // evaluation
  std::vector<double> map_tious{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  double ar_tiou = 0.5;
  std::vector<std::size_t> an_values{50, 100, 200};
  double frequency = 1.0;

  void validate() const;

  SynthSpec synth_spec() const;
  std::vector<WindowScale> scales() const;
  OffsetScheme scheme() const;
  PoolingConfig pooling() const { return {n_ctx}; }
  TrainConfig train_config(Stage stage) const;
  CascadeConfig cascade_config() const;
  EvalConfig eval_config() const;

  /// Every setting except the two directories.
  nlohmann::json to_json() const;
  /// FNV-1a 64 of to_json().dump(), as 16 hex digits.
  std::string hash() const;
};

/// Header line written at the top of every CSV artifact.
std::string artifact_preamble(const ExperimentConfig& cfg);

enum class Split { Train, Test };

struct LoadedData {
  std::vector<UnitFeatureTable> tables;
  std::vector<Annotation> annotations;
  std::vector<std::string> class_names;
  std::map<std::string, VideoMeta> metas;
};

/// gen-data: writes data_dir/{features/*.cbrf, annotations.json, classes.json,
/// manifest.json}.
void write_synthetic_data(const ExperimentConfig& cfg);

/// Reads the videos of one split as listed in data_dir/manifest.json.
LoadedData load_split(const ExperimentConfig& cfg, Split split);

struct StageModel {
  ModelShape shape;
  ModelParameters params;
};

ModelShape model_shape(const ExperimentConfig& cfg, Stage stage, int n_classes);
std::uint64_t stage_seed(const ExperimentConfig& cfg, Stage stage);

StageModel train_model(const ExperimentConfig& cfg, Stage stage, const LoadedData& train,
                       std::vector<EpochLog>* log = nullptr);

struct InferenceOutput {
  std::vector<Detection> proposals;
  std::vector<Detection> detections;
};

InferenceOutput run_inference(const LoadedData& data, const StageModel& proposal, const StageModel& detection,
                              const ExperimentConfig& cfg, const CascadeConfig& cascade);

// Commands. Each writes config.json (resolved settings, hash and seed) into
// out_dir alongside its outputs.

void command_gen_data(const ExperimentConfig& cfg);
void command_train(const ExperimentConfig& cfg, Stage stage);
void command_infer(const ExperimentConfig& cfg);
void command_eval(const ExperimentConfig& cfg, Stage task);
void command_ablate_offsets(const ExperimentConfig& cfg);
void command_ablate_cascade(const ExperimentConfig& cfg, const std::vector<int>& k_values);

}  // namespace cbr
