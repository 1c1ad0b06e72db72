// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/sampling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

#include "cbr/error.hpp"

namespace cbr {

std::string_view to_string(Stage stage) {
  return stage == Stage::Proposal ? "proposal" : "detection";
}

std::optional<Stage> parse_stage(std::string_view name) {
  if (name == "proposal") return Stage::Proposal;
  if (name == "detection") return Stage::Detection;
  return std::nullopt;
}

WindowScale parse_window_scale(std::string_view text) {
  const auto open = text.find('(');
  const auto close = text.find(')');
  const auto bad = [&] { return ValidationError("window_scales: cannot parse '" + std::string(text) + "', expected L(S)"); };
  if (open == std::string_view::npos || close != text.size() - 1 || close < open) throw bad();
  WindowScale scale;
  const auto len = text.substr(0, open);
  const auto stride = text.substr(open + 1, close - open - 1);
  if (std::from_chars(len.data(), len.data() + len.size(), scale.length).ptr != len.data() + len.size() ||
      std::from_chars(stride.data(), stride.data() + stride.size(), scale.stride).ptr !=
          stride.data() + stride.size() ||
      len.empty() || stride.empty()) {
    throw bad();
  }
  return scale;
}

std::string format_window_scale(const WindowScale& scale) {
  return std::to_string(scale.length) + "(" + std::to_string(scale.stride) + ")";
}

std::vector<TemporalInterval> generate_windows(const VideoMeta& meta, std::span<const WindowScale> scales) {
  if (scales.empty()) throw ValidationError("window_scales: at least one scale is required");
  std::vector<TemporalInterval> out;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  const std::int64_t n = meta.num_units();
  for (const auto& scale : scales) {
    if (scale.length < 1 || scale.stride < 1 || scale.stride > scale.length) {
      throw ValidationError("window_scales: " + format_window_scale(scale) + " needs 1 <= stride <= length");
    }
    if (scale.length % meta.unit_frames != 0 || scale.stride % meta.unit_frames != 0) {
      throw ValidationError("window_scales: " + format_window_scale(scale) + " is not a multiple of unit_frames=" +
                            std::to_string(meta.unit_frames));
    }
    const std::int64_t len = scale.length / meta.unit_frames;
    const std::int64_t stride = scale.stride / meta.unit_frames;
    for (std::int64_t s = 0; s + len <= n; s += stride) {
      if (seen.emplace(s, s + len).second) out.push_back(units(static_cast<double>(s), static_cast<double>(s + len)));
    }
  }
  return out;
}

std::vector<LabeledWindow> assign_labels(std::span<const TemporalInterval> windows,
                                         std::span<const Annotation> annotations, const VideoMeta& meta,
                                         OffsetScheme scheme, double pos_tiou) {
  const std::size_t nw = windows.size();
  const std::size_t na = annotations.size();
  std::vector<double> overlap(nw * na);
  for (std::size_t i = 0; i < nw; ++i) {
    for (std::size_t j = 0; j < na; ++j) overlap[i * na + j] = tiou(windows[i], annotations[j].interval);
  }

  std::vector<bool> forced(nw, false);
  for (std::size_t j = 0; j < na; ++j) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < nw; ++i) {
      const double v = overlap[i * na + j];
      if (v <= 0.0) continue;
      if (!best) {
        best = i;
        continue;
      }
      const double b = overlap[*best * na + j];
      const auto& wi = windows[i];
      const auto& wb = windows[*best];
      if (v > b || (v == b && (wi.start < wb.start || (wi.start == wb.start && wi.length() < wb.length())))) {
        best = i;
      }
    }
    if (best) forced[*best] = true;
  }

  std::vector<LabeledWindow> out(nw);
  for (std::size_t i = 0; i < nw; ++i) {
    auto& lw = out[i];
    lw.window = windows[i];
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < na; ++j) {
      const double v = overlap[i * na + j];
      if (v <= 0.0) continue;
      if (!best || v > overlap[i * na + *best] ||
          (v == overlap[i * na + *best] && annotations[j].interval.start < annotations[*best].interval.start)) {
        best = j;
      }
    }
    lw.max_tiou = best ? overlap[i * na + *best] : 0.0;
    if (best && (forced[i] || lw.max_tiou > pos_tiou)) {
      lw.role = WindowRole::Positive;
      lw.label = annotations[*best].label;
      lw.matched_gt = *best;
      lw.target = encode_target(lw.window, annotations[*best].interval, meta, scheme);
    } else if (!best) {
      lw.role = WindowRole::Background;
    } else {
      lw.role = WindowRole::Ignored;
    }
  }
  return out;
}

BatchComposition batch_composition(Stage stage, std::size_t batch_size, int n_classes, double background_ratio) {
  if (batch_size < 2) throw ValidationError("batch_size: must be >= 2");
  BatchComposition c;
  if (stage == Stage::Proposal) {
    if (!(background_ratio > 0.0)) throw ValidationError("background_ratio: must be positive");
    c.positives = static_cast<std::size_t>(round_half_away(static_cast<double>(batch_size) / (background_ratio + 1.0)));
  } else {
    if (n_classes < 1) throw ValidationError("n_classes: must be >= 1");
    c.background = static_cast<std::size_t>(round_half_away(static_cast<double>(batch_size) / (n_classes + 1)));
    c.background = std::clamp<std::size_t>(c.background, 1, batch_size - 1);
    c.positives = batch_size - c.background;
    return c;
  }
  c.positives = std::clamp<std::size_t>(c.positives, 1, batch_size - 1);
  c.background = batch_size - c.positives;
  return c;
}

namespace {

void draw(std::span<const std::size_t> stratum, std::size_t count, Rng& rng, std::vector<std::size_t>& out) {
  std::vector<std::size_t> order(stratum.begin(), stratum.end());
  const std::size_t fresh = std::min(count, order.size());
  for (std::size_t k = 0; k < fresh; ++k) {
    const auto pick = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(k),
                                                               static_cast<std::int64_t>(order.size()) - 1));
    std::swap(order[k], order[pick]);
    out.push_back(order[k]);
  }
  for (std::size_t k = fresh; k < count; ++k) {
    out.push_back(order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(order.size()) - 1))]);
  }
}

}  // namespace

std::vector<BatchItem> build_minibatch(std::span<const LabeledWindow> pool, Stage stage, std::size_t batch_size,
                                       int n_classes, Rng& rng, double background_ratio) {
  const auto comp = batch_composition(stage, batch_size, n_classes, background_ratio);
  std::vector<std::size_t> positives;
  std::vector<std::size_t> background;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].role == WindowRole::Positive) positives.push_back(i);
    if (pool[i].role == WindowRole::Background) background.push_back(i);
  }
  if (positives.empty()) throw SamplingError("build_minibatch: the positive stratum is empty");
  if (background.empty()) throw SamplingError("build_minibatch: the background stratum is empty");

  std::vector<std::size_t> picked;
  picked.reserve(batch_size);
  draw(positives, comp.positives, rng, picked);
  draw(background, comp.background, rng, picked);

  std::vector<BatchItem> batch;
  batch.reserve(picked.size());
  for (std::size_t idx : picked) {
    const auto& w = pool[idx];
    BatchItem item{idx, 0, std::nullopt};
    if (w.role == WindowRole::Positive) {
      item.label = stage == Stage::Proposal ? 1 : w.label;
      item.target = w.target;
    }
    batch.push_back(item);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// JSON files

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

std::vector<AnnotationRecord> load_annotation_records(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array");
  std::vector<AnnotationRecord> out;
  try {
    for (const auto& e : j) {
      out.push_back({e.at("video_id").get<std::string>(), e.at("start_sec").get<double>(),
                     e.at("end_sec").get<double>(), e.at("label").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

void save_annotation_records(std::span<const AnnotationRecord> records, const std::filesystem::path& path) {
  auto j = nlohmann::json::array();
  for (const auto& r : records) {
    j.push_back({{"video_id", r.video_id}, {"start_sec", r.start_sec}, {"end_sec", r.end_sec}, {"label", r.label}});
  }
  write_json(j, path);
}

std::vector<std::string> load_class_vocabulary(const std::filesystem::path& path) {
  const auto j = read_json(path);
  try {
    return j.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_class_vocabulary(std::span<const std::string> names, const std::filesystem::path& path) {
  write_json(nlohmann::json(std::vector<std::string>(names.begin(), names.end())), path);
}

Annotation to_annotation(const AnnotationRecord& record, const VideoMeta& meta, int n_classes) {
  if (record.label < 1 || record.label > n_classes) {
    throw ValidationError("annotation label " + std::to_string(record.label) + " outside 1.." +
                          std::to_string(n_classes) + " (video " + record.video_id + ")");
  }
  if (!(record.start_sec >= 0.0) || !(record.end_sec > record.start_sec)) {
    throw ValidationError("annotation interval invalid (video " + record.video_id + ")");
  }
  const TemporalInterval secs{record.start_sec, record.end_sec, CoordSystem::Seconds};
  return {record.video_id, convert(secs, CoordSystem::Units, meta), record.label};
}

AnnotationRecord to_record(const Annotation& annotation, const VideoMeta& meta) {
  const auto secs = convert(annotation.interval, CoordSystem::Seconds, meta);
  return {annotation.video_id, secs.start, secs.end, annotation.label};
}

}  // namespace cbr
