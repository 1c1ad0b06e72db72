// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbr/cascade.hpp"
#include "cbr/sampling.hpp"

namespace cbr {

struct EvalConfig {
  std::vector<double> map_tious{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  double ar_tiou = 0.5;
  std::vector<std::size_t> an_values{50, 100, 200};
  double frequency = 1.0;  // proposals per second of video

  void validate() const;
};

using DetectionsByVideo = std::map<std::string, std::vector<Detection>>;

DetectionsByVideo group_by_video(std::span<const Detection> detections);

/// Fraction of annotations recovered by the top `an` proposals of their
/// video. Proposals are matched greedily in rank order, each to the
/// unmatched annotation with the highest tIoU >= tiou_thresh.
/// Throws UndefinedMetricError without annotations.
double average_recall_at_an(const DetectionsByVideo& proposals, std::span<const Annotation> annotations,
                            std::size_t an, double tiou_thresh);

/// As average_recall_at_an with a per-video budget of
/// round(frequency * duration_seconds) proposals.
double average_recall_at_f(const DetectionsByVideo& proposals, std::span<const Annotation> annotations,
                           const std::map<std::string, VideoMeta>& metas, double frequency, double tiou_thresh);

/// All-point interpolated AP of one class. Detections are ranked by score
/// across videos; each takes the unmatched same-video annotation with the
/// highest tIoU >= tiou_thresh. Returns nullopt if the class has no
/// annotations.
std::optional<double> average_precision(std::span<const Detection> detections, std::span<const Annotation> annotations,
                                        int label, double tiou_thresh);

struct MapResult {
  std::vector<std::optional<double>> per_class;  // index label - 1
  double mean = 0.0;                             // over classes with annotations
};

MapResult mean_average_precision(std::span<const Detection> detections, std::span<const Annotation> annotations,
                                 int n_classes, double tiou_thresh);

struct MetricRow {
  std::string metric;
  std::string class_name;  // "all" for aggregate rows
  double threshold = 0.0;
  double value = 0.0;
};

std::vector<MetricRow> proposal_report(const DetectionsByVideo& proposals, std::span<const Annotation> annotations,
                                       const std::map<std::string, VideoMeta>& metas, const EvalConfig& cfg);
std::vector<MetricRow> detection_report(std::span<const Detection> detections, std::span<const Annotation> annotations,
                                        std::span<const std::string> class_names, const EvalConfig& cfg);

/// CSV "metric,class,threshold,value" with fixed six-decimal values.
/// `preamble` lines are written first, verbatim.
std::string format_report_csv(std::span<const MetricRow> rows, const std::string& preamble = {});
nlohmann::json report_summary(std::span<const MetricRow> rows);

}  // namespace cbr
