// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/cascade.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <tuple>

#include <json.hpp>

#include "cbr/error.hpp"

namespace cbr {

void CascadeConfig::validate() const {
  if (k_proposal < 1) throw ValidationError("k_proposal: must be >= 1");
  if (k_detection < 1) throw ValidationError("k_detection: must be >= 1");
  if (!(theta >= 0.0 && theta <= 1.0)) throw ValidationError("theta: must be in [0, 1]");
  if (!(nms_tiou > 0.0 && nms_tiou < 1.0)) throw ValidationError("nms_tiou: must be in (0, 1)");
  if (!(proposal_nms_tiou > 0.0 && proposal_nms_tiou <= 1.0)) {
    throw ValidationError("proposal_nms_tiou: must be in (0, 1]");
  }
  if (pooling.n_ctx < 0) throw ValidationError("n_ctx: must be >= 0");
}

bool detection_order(const Detection& a, const Detection& b) {
  return std::tie(b.score, a.interval.start, a.interval.end, a.label, a.video_id) <
         std::tie(a.score, b.interval.start, b.interval.end, b.label, b.video_id);
}

namespace {

/// Applies the chosen offsets and clamps to [0, num_units]; nullopt when the
/// result is degenerate before or after clamping.
std::optional<TemporalInterval> step_boundaries(const TemporalInterval& current, const OffsetPair& offsets,
                                                const VideoMeta& meta, bool regress) {
  if (!regress) return current;
  auto next = apply_offsets(current, offsets, meta);
  if (!next) return std::nullopt;
  const double n = static_cast<double>(meta.num_units());
  next->start = std::clamp(next->start, 0.0, n);
  next->end = std::clamp(next->end, 0.0, n);
  if (!(next->end > next->start)) return std::nullopt;
  return next;
}

void check_stage(const ModelShape& shape, Stage expected, const char* what) {
  if (shape.stage != expected) {
    throw ContractError(std::string(what) + ": expected " + std::string(to_string(expected)) + "-stage parameters");
  }
}

}  // namespace

std::vector<Detection> refine_proposals(const UnitFeatureTable& table, std::span<const TemporalInterval> windows,
                                        const ModelParameters& params, const ModelShape& shape,
                                        const CascadeConfig& cfg) {
  cfg.validate();
  check_stage(shape, Stage::Proposal, "refine_proposals");
  std::vector<Detection> out;
  for (const auto& window : windows) {
    Detection d{table.meta().video_id, window, 0, 1.0, {}};
    bool alive = true;
    for (int k = 0; k < cfg.k_proposal && alive; ++k) {
      const auto feature = pool_clip_feature(table, d.interval, cfg.pooling);
      const auto output = forward(params, shape, feature);
      const double p = output.actionness();
      d.step_scores.push_back(p);
      d.score *= p;
      const auto next = step_boundaries(d.interval, output.offset_pair(1, cfg.scheme), table.meta(), cfg.regress);
      if (next) {
        d.interval = *next;
      } else {
        alive = false;
      }
    }
    if (alive && d.score > cfg.theta) out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), detection_order);
  return out;
}

std::vector<Detection> detect(const UnitFeatureTable& table, std::span<const Detection> proposals,
                              const ModelParameters& params, const ModelShape& shape, const CascadeConfig& cfg) {
  cfg.validate();
  check_stage(shape, Stage::Detection, "detect");
  std::vector<Detection> out;
  for (const auto& proposal : proposals) {
    Detection d{proposal.video_id, proposal.interval, 0, 1.0, {}};
    bool alive = true;
    bool background_wins = false;
    for (int k = 0; k < cfg.k_detection && alive; ++k) {
      const auto feature = pool_clip_feature(table, d.interval, cfg.pooling);
      const auto output = forward(params, shape, feature);
      const auto& p = output.probabilities;
      const auto best = std::max_element(p.begin() + 1, p.end());
      d.label = static_cast<int>(best - p.begin());
      d.step_scores.push_back(*best);
      d.score *= *best;
      background_wins = p[0] >= *best;  // argmax over all classes prefers the lowest index
      const auto next = step_boundaries(d.interval, output.offset_pair(d.label, cfg.scheme), table.meta(), cfg.regress);
      if (next) {
        d.interval = *next;
      } else {
        alive = false;
      }
    }
    if (alive && !background_wins) out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), detection_order);
  return out;
}

std::vector<Detection> nms(std::vector<Detection> detections, double nms_tiou) {
  std::sort(detections.begin(), detections.end(), detection_order);
  std::vector<Detection> kept;
  for (auto& d : detections) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](const Detection& k) { return tiou(d.interval, k.interval) > nms_tiou; });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

std::vector<Detection> nms_grouped(std::vector<Detection> detections, double nms_tiou) {
  std::map<std::pair<std::string, int>, std::vector<Detection>> groups;
  for (auto& d : detections) groups[{d.video_id, d.label}].push_back(std::move(d));
  std::vector<Detection> out;
  for (auto& [key, group] : groups) {
    for (auto& d : nms(std::move(group), nms_tiou)) out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), detection_order);
  return out;
}

VideoResult run_cascade(const UnitFeatureTable& table, std::span<const TemporalInterval> windows,
                        const ModelParameters& proposal_params, const ModelShape& proposal_shape,
                        const ModelParameters& detection_params, const ModelShape& detection_shape,
                        const CascadeConfig& cfg) {
  // theta gates what the detection network sees; the ranked proposal list
  // itself is reported in full.
  CascadeConfig ungated = cfg;
  ungated.theta = 0.0;
  VideoResult r;
  r.proposals = nms(refine_proposals(table, windows, proposal_params, proposal_shape, ungated), cfg.proposal_nms_tiou);
  std::vector<Detection> gated;
  for (const auto& p : r.proposals)
    if (p.score > cfg.theta) gated.push_back(p);
  r.detections = nms_grouped(detect(table, gated, detection_params, detection_shape, cfg), cfg.nms_tiou);
  return r;
}

void save_detections(const std::filesystem::path& path, std::span<const Detection> detections,
                     const std::map<std::string, VideoMeta>& metas) {
  std::vector<Detection> sorted(detections.begin(), detections.end());
  std::stable_sort(sorted.begin(), sorted.end(), detection_order);
  auto j = nlohmann::json::array();
  for (const auto& d : sorted) {
    const auto it = metas.find(d.video_id);
    if (it == metas.end()) throw ValidationError("save_detections: unknown video '" + d.video_id + "'");
    const auto secs = convert(d.interval, CoordSystem::Seconds, it->second);
    j.push_back({{"video_id", d.video_id},
                 {"start_sec", secs.start},
                 {"end_sec", secs.end},
                 {"label", d.label},
                 {"score", d.score}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<Detection> load_detections(const std::filesystem::path& path,
                                       const std::map<std::string, VideoMeta>& metas) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Detection> out;
  try {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array");
    for (const auto& e : j) {
      Detection d;
      d.video_id = e.at("video_id").get<std::string>();
      const auto it = metas.find(d.video_id);
      if (it == metas.end()) throw ValidationError(path.string() + ": unknown video '" + d.video_id + "'");
      const TemporalInterval secs{e.at("start_sec").get<double>(), e.at("end_sec").get<double>(),
                                  CoordSystem::Seconds};
      d.interval = convert(secs, CoordSystem::Units, it->second);
      d.label = e.at("label").get<int>();
      d.score = e.at("score").get<double>();
      out.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace cbr
