// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbr/coords.hpp"
#include "cbr/features.hpp"
#include "cbr/nnet.hpp"

namespace cbr {

struct CascadeConfig {
  int k_proposal = 3;
  int k_detection = 2;
  double theta = 0.1;              // proposal score threshold
  double nms_tiou = 0.5;           // class-wise suppression of detections
  double proposal_nms_tiou = 0.7;  // suppression of proposals before detection
  OffsetScheme scheme = OffsetScheme::BoundaryUnit;
  bool regress = true;  // false applies no offsets (classification only)
  PoolingConfig pooling;

  void validate() const;
};

struct Detection {
  std::string video_id;
  TemporalInterval interval;  // Units
  int label = 0;              // 0 for class-agnostic proposals
  double score = 0.0;
  std::vector<double> step_scores;  // probability used at each cascade step
};

/// Orders by score descending, then start, end and label ascending.
bool detection_order(const Detection& a, const Detection& b);

/// Cascaded proposal refinement: each step re-pools the current boundaries,
/// applies the predicted offsets, clamps to the video and multiplies the
/// actionness into the score. Candidates that degenerate are dropped; those
/// with final score > theta are returned in detection_order.
std::vector<Detection> refine_proposals(const UnitFeatureTable& table, std::span<const TemporalInterval> windows,
                                        const ModelParameters& params, const ModelShape& shape,
                                        const CascadeConfig& cfg);

/// Cascaded detection. Each step follows the argmax non-background class;
/// the label is the final step's choice, and proposals whose final argmax
/// over all classes is background are dropped.
std::vector<Detection> detect(const UnitFeatureTable& table, std::span<const Detection> proposals,
                              const ModelParameters& params, const ModelShape& shape, const CascadeConfig& cfg);

/// Greedy suppression within one (video, class) group.
std::vector<Detection> nms(std::vector<Detection> detections, double nms_tiou);

/// nms applied independently to every (video, label) group; result in
/// detection_order.
std::vector<Detection> nms_grouped(std::vector<Detection> detections, double nms_tiou);

struct VideoResult {
  std::vector<Detection> proposals;   // after proposal NMS, not gated by theta
  std::vector<Detection> detections;  // after class-wise NMS
};

/// Full two-stage inference. Only proposals with score > theta are passed
/// to the detection stage.
VideoResult run_cascade(const UnitFeatureTable& table, std::span<const TemporalInterval> windows,
                        const ModelParameters& proposal_params, const ModelShape& proposal_shape,
                        const ModelParameters& detection_params, const ModelShape& detection_shape,
                        const CascadeConfig& cfg);

// Detection file: JSON array of {video_id, start_sec, end_sec, label, score}
// in detection_order.
void save_detections(const std::filesystem::path& path, std::span<const Detection> detections,
                     const std::map<std::string, VideoMeta>& metas);
std::vector<Detection> load_detections(const std::filesystem::path& path,
                                       const std::map<std::string, VideoMeta>& metas);

}  // namespace cbr
