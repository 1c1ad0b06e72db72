// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cbr/error.hpp"

namespace cbr {

void EvalConfig::validate() const {
  for (double t : map_tious) {
    if (!(t > 0.0 && t <= 1.0)) throw ValidationError("map_tious: thresholds must be in (0, 1]");
  }
  if (!(ar_tiou > 0.0 && ar_tiou <= 1.0)) throw ValidationError("ar_tiou: must be in (0, 1]");
  for (auto an : an_values) {
    if (an < 1) throw ValidationError("an_values: must be >= 1");
  }
  if (!(frequency > 0.0)) throw ValidationError("frequency: must be positive");
}

DetectionsByVideo group_by_video(std::span<const Detection> detections) {
  DetectionsByVideo out;
  for (const auto& d : detections) out[d.video_id].push_back(d);
  for (auto& [id, list] : out) std::stable_sort(list.begin(), list.end(), detection_order);
  return out;
}

namespace {

/// Greedy rank-order matching; returns the number of matched annotations.
std::size_t count_recalled(std::span<const Detection> ranked, std::size_t budget,
                           std::span<const Annotation* const> annotations, double tiou_thresh) {
  std::vector<bool> used(annotations.size(), false);
  std::size_t matched = 0;
  const std::size_t n = std::min(budget, ranked.size());
  for (std::size_t r = 0; r < n; ++r) {
    std::optional<std::size_t> best;
    double best_tiou = 0.0;
    for (std::size_t j = 0; j < annotations.size(); ++j) {
      if (used[j]) continue;
      const double v = tiou(ranked[r].interval, annotations[j]->interval);
      if (v >= tiou_thresh && (!best || v > best_tiou)) {
        best = j;
        best_tiou = v;
      }
    }
    if (best) {
      used[*best] = true;
      ++matched;
    }
  }
  return matched;
}

template <typename BudgetFn>
double average_recall(const DetectionsByVideo& proposals, std::span<const Annotation> annotations, BudgetFn budget,
                      double tiou_thresh) {
  if (annotations.empty()) throw UndefinedMetricError("average recall: no annotations");
  std::map<std::string, std::vector<const Annotation*>> by_video;
  for (const auto& a : annotations) by_video[a.video_id].push_back(&a);
  std::size_t matched = 0;
  for (const auto& [video, gts] : by_video) {
    const auto it = proposals.find(video);
    if (it == proposals.end()) continue;
    std::vector<Detection> ranked = it->second;
    std::stable_sort(ranked.begin(), ranked.end(), detection_order);
    matched += count_recalled(ranked, budget(video), gts, tiou_thresh);
  }
  return static_cast<double>(matched) / static_cast<double>(annotations.size());
}

}  // namespace

double average_recall_at_an(const DetectionsByVideo& proposals, std::span<const Annotation> annotations,
                            std::size_t an, double tiou_thresh) {
  return average_recall(proposals, annotations, [an](const std::string&) { return an; }, tiou_thresh);
}

double average_recall_at_f(const DetectionsByVideo& proposals, std::span<const Annotation> annotations,
                           const std::map<std::string, VideoMeta>& metas, double frequency, double tiou_thresh) {
  if (!(frequency >= 0.0)) throw ValidationError("frequency: must be >= 0");
  auto budget = [&](const std::string& video) {
    const auto it = metas.find(video);
    if (it == metas.end()) throw ValidationError("average_recall_at_f: no metadata for video '" + video + "'");
    return static_cast<std::size_t>(round_half_away(frequency * it->second.duration_seconds()));
  };
  return average_recall(proposals, annotations, budget, tiou_thresh);
}

std::optional<double> average_precision(std::span<const Detection> detections, std::span<const Annotation> annotations,
                                        int label, double tiou_thresh) {
  std::vector<const Annotation*> gts;
  for (const auto& a : annotations) {
    if (a.label == label) gts.push_back(&a);
  }
  if (gts.empty()) return std::nullopt;

  std::vector<const Detection*> ranked;
  for (const auto& d : detections) {
    if (d.label == label) ranked.push_back(&d);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Detection* a, const Detection* b) { return detection_order(*a, *b); });

  std::vector<bool> used(gts.size(), false);
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    std::optional<std::size_t> best;
    double best_tiou = 0.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j]->video_id != ranked[r]->video_id) continue;
      const double v = tiou(ranked[r]->interval, gts[j]->interval);
      if (v >= tiou_thresh && (!best || v > best_tiou)) {
        best = j;
        best_tiou = v;
      }
    }
    if (best) {
      used[*best] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
  }

  // Precision envelope over padded curves, summed over recall steps.
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

MapResult mean_average_precision(std::span<const Detection> detections, std::span<const Annotation> annotations,
                                 int n_classes, double tiou_thresh) {
  MapResult r;
  double sum = 0.0;
  int counted = 0;
  for (int c = 1; c <= n_classes; ++c) {
    r.per_class.push_back(average_precision(detections, annotations, c, tiou_thresh));
    if (r.per_class.back()) {
      sum += *r.per_class.back();
      ++counted;
    }
  }
  if (counted == 0) throw UndefinedMetricError("mean_average_precision: no class has annotations");
  r.mean = sum / counted;
  return r;
}

std::vector<MetricRow> proposal_report(const DetectionsByVideo& proposals, std::span<const Annotation> annotations,
                                       const std::map<std::string, VideoMeta>& metas, const EvalConfig& cfg) {
  cfg.validate();
  std::vector<MetricRow> rows;
  for (auto an : cfg.an_values) {
    rows.push_back({"AR@AN=" + std::to_string(an), "all", cfg.ar_tiou,
                    average_recall_at_an(proposals, annotations, an, cfg.ar_tiou)});
  }
  std::ostringstream f;
  f << "AR@F=" << cfg.frequency;
  rows.push_back({f.str(), "all", cfg.ar_tiou,
                  average_recall_at_f(proposals, annotations, metas, cfg.frequency, cfg.ar_tiou)});
  return rows;
}

std::vector<MetricRow> detection_report(std::span<const Detection> detections, std::span<const Annotation> annotations,
                                        std::span<const std::string> class_names, const EvalConfig& cfg) {
  cfg.validate();
  std::vector<MetricRow> rows;
  const int n = static_cast<int>(class_names.size());
  for (double t : cfg.map_tious) {
    const auto r = mean_average_precision(detections, annotations, n, t);
    for (int c = 0; c < n; ++c) {
      if (r.per_class[static_cast<std::size_t>(c)]) {
        rows.push_back({"AP", class_names[static_cast<std::size_t>(c)], t, *r.per_class[static_cast<std::size_t>(c)]});
      }
    }
    rows.push_back({"mAP", "all", t, r.mean});
  }
  return rows;
}

std::string format_report_csv(std::span<const MetricRow> rows, const std::string& preamble) {
  std::string out = preamble;
  out += "metric,class,threshold,value\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.2f,%.6f\n", r.threshold, r.value);
    out += r.metric + "," + r.class_name + buf;
  }
  return out;
}

nlohmann::json report_summary(std::span<const MetricRow> rows) {
  auto metrics = nlohmann::json::array();
  for (const auto& r : rows) {
    metrics.push_back({{"metric", r.metric}, {"class", r.class_name}, {"threshold", r.threshold}, {"value", r.value}});
  }
  return {{"metrics", metrics}};
}

}  // namespace cbr
