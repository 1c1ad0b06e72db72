// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cbr/coords.hpp"
#include "cbr/features.hpp"
#include "cbr/sampling.hpp"

namespace cbr {

/// Shared ReLU trunk feeding a classification head and a regression head.
///   Proposal:  2 logits (background, action), 1 offset pair
///   Detection: n + 1 logits (background first), n offset pairs
struct ModelShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{1000};
  int n_classes = 1;
  Stage stage = Stage::Proposal;

  /// Classes with an offset pair; 1 for the proposal stage.
  int regression_classes() const { return stage == Stage::Proposal ? 1 : n_classes; }
  std::size_t num_logits() const { return static_cast<std::size_t>(regression_classes()) + 1; }
  std::size_t num_offsets() const { return 2 * static_cast<std::size_t>(regression_classes()); }

  void validate() const;
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct ModelParameters {
  std::vector<Dense> trunk;
  Dense cls_head;
  Dense reg_head;

  /// Visits every tensor's storage in checkpoint order: trunk layers,
  /// classification head, regression head; weight (column-major) before
  /// bias within a layer.
  void for_each(const std::function<void(std::span<double>)>& fn);
  void for_each(const std::function<void(std::span<const double>)>& fn) const;
  std::size_t size() const;
  bool all_finite() const;
  bool check_shape(const ModelShape& shape) const;
};

/// Glorot-uniform weights, zero biases, drawn from Rng(seed).
ModelParameters init_parameters(const ModelShape& shape, std::uint64_t seed);
ModelParameters zeros_like(const ModelParameters& params);

struct StageOutput {
  std::vector<double> probabilities;  // index 0 is background
  std::vector<double> offsets;        // pair for class z at 2(z-1), 2(z-1)+1

  double actionness() const { return probabilities.at(1); }
  OffsetPair offset_pair(int class_id, OffsetScheme scheme) const;
};

StageOutput forward(const ModelParameters& params, const ModelShape& shape, std::span<const double> feature);

struct Target {
  int label = 0;  // 0 = background
  std::optional<OffsetPair> offsets;
};

struct LossValue {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
};

/// L = L_cls + lambda * L_reg. L_cls is the mean cross-entropy; L_reg is the
/// L1 error of the true class's offset pair, summed and divided by the batch
/// size (background samples contribute nothing).
LossValue loss(std::span<const StageOutput> outputs, std::span<const Target> targets, double lambda);

/// Column-major batch: features.col(i) is sample i.
struct Batch {
  Eigen::MatrixXd features;
  std::vector<Target> targets;
};

struct GradientResult {
  ModelParameters grads;
  LossValue loss;
};

/// Analytic gradient of the loss. Subgradients of ReLU and |.| at zero are 0.
GradientResult backward(const ModelParameters& params, const ModelShape& shape, const Batch& batch, double lambda);

/// Loss of a batch evaluated through the same path as backward.
LossValue batch_loss(const ModelParameters& params, const ModelShape& shape, const Batch& batch, double lambda);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParameters first_moment;
  ModelParameters second_moment;
  std::int64_t step = 0;

  static AdamState for_parameters(const ModelParameters& params);
};

/// One bias-corrected Adam update; advances state.step. Throws
/// DivergenceError on non-finite gradients or parameters.
void adam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state, double learning_rate,
               const AdamConfig& cfg = {});

struct TrainConfig {
  double learning_rate = 0.005;
  std::size_t batch_size = 128;
  double lambda = 2.0;
  int epochs = 30;
  std::uint64_t seed = 0;
  Stage stage = Stage::Proposal;
  double background_ratio = 10.0;
  AdamConfig adam;

  void validate() const;
};

/// Labeled windows of every training video with their pooled features.
/// Ignored windows are dropped when the set is built.
struct TrainingSet {
  std::vector<LabeledWindow> windows;
  Eigen::MatrixXd features;  // input_dim x windows.size()
  int n_classes = 0;
};

TrainingSet build_training_set(std::span<const UnitFeatureTable> tables, std::span<const Annotation> annotations,
                               std::span<const WindowScale> scales, const PoolingConfig& pooling,
                               OffsetScheme scheme, int n_classes);

struct EpochLog {
  int epoch = 0;
  LossValue mean_loss;
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochLog> log;
};

/// One epoch is ceil(positives / positives-per-batch) minibatches, so each
/// positive is seen about once per epoch.
TrainResult train(const TrainConfig& config, const ModelShape& shape, const TrainingSet& data);

// Checkpoint: one line of JSON header, '\n', then the parameters as
// little-endian f32 in for_each order.
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelShape shape;
  ModelParameters params;
  std::uint64_t seed = 0;
  nlohmann::json header;
};

void save_checkpoint(const std::filesystem::path& path, const ModelShape& shape, const ModelParameters& params,
                     std::uint64_t seed, const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log,
                        const std::string& preamble = {});

}  // namespace cbr
