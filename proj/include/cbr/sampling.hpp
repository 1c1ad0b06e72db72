// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbr/coords.hpp"
#include "cbr/core.hpp"
#include "cbr/rng.hpp"

namespace cbr {

enum class Stage { Proposal, Detection };

std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

/// Sliding-window scale in frames. The bracketed number in "32(16)" is the
/// stride between consecutive window starts.
struct WindowScale {
  std::uint32_t length = 0;
  std::uint32_t stride = 0;

  friend bool operator==(const WindowScale&, const WindowScale&) = default;
};

/// Parses "L(S)". Throws ValidationError.
WindowScale parse_window_scale(std::string_view text);
std::string format_window_scale(const WindowScale& scale);

struct Annotation {
  std::string video_id;
  TemporalInterval interval;  // Units, real-valued (frames / unit_frames)
  int label = 0;              // 1..n
};

/// Windows for every scale, ordered by scale then start; duplicates across
/// scales keep their first occurrence. Throws ValidationError if a scale is
/// not a whole number of units.
std::vector<TemporalInterval> generate_windows(const VideoMeta& meta, std::span<const WindowScale> scales);

enum class WindowRole { Positive, Background, Ignored };

struct LabeledWindow {
  TemporalInterval window;
  int label = 0;  // 0 = background
  std::optional<OffsetPair> target;
  std::optional<std::size_t> matched_gt;  // index into the annotation list
  WindowRole role = WindowRole::Background;
  double max_tiou = 0.0;
};

/// A window is positive if it is some annotation's best-tIoU window (and
/// overlaps it), or if its tIoU with any annotation exceeds `pos_tiou`.
/// Positives take the label and offsets of their best-tIoU annotation.
/// Windows overlapping nothing are background; the rest are ignored.
///
/// Ties: an annotation's best window is the earliest-starting, then the
/// shortest; a window's best annotation is the earliest-starting one.
std::vector<LabeledWindow> assign_labels(std::span<const TemporalInterval> windows,
                                         std::span<const Annotation> annotations, const VideoMeta& meta,
                                         OffsetScheme scheme, double pos_tiou = 0.5);

struct BatchItem {
  std::size_t index = 0;  // into the sample pool
  int label = 0;          // Proposal: 0/1; Detection: 0..n
  std::optional<OffsetPair> target;
};

struct BatchComposition {
  std::size_t positives = 0;
  std::size_t background = 0;
};

/// Proposal: background : positive = `background_ratio` : 1, positives
/// rounded half away. Detection: background = round(batch / (n + 1)), which
/// equals the mean per-class positive count of the batch.
BatchComposition batch_composition(Stage stage, std::size_t batch_size, int n_classes,
                                   double background_ratio = 10.0);

/// Stratified minibatch. Each stratum is drawn without replacement while it
/// lasts, then uniformly with replacement. Ignored windows are never drawn.
/// Throws SamplingError naming an empty stratum.
std::vector<BatchItem> build_minibatch(std::span<const LabeledWindow> pool, Stage stage, std::size_t batch_size,
                                       int n_classes, Rng& rng, double background_ratio = 10.0);

// Annotation file: JSON array of {video_id, start_sec, end_sec, label}.
// Class vocabulary file: JSON array of names, index = label - 1.

struct AnnotationRecord {
  std::string video_id;
  double start_sec = 0.0;
  double end_sec = 0.0;
  int label = 0;
};

std::vector<AnnotationRecord> load_annotation_records(const std::filesystem::path& path);
void save_annotation_records(std::span<const AnnotationRecord> records, const std::filesystem::path& path);
std::vector<std::string> load_class_vocabulary(const std::filesystem::path& path);
void save_class_vocabulary(std::span<const std::string> names, const std::filesystem::path& path);

/// Seconds to unit coordinates (unrounded). Throws ValidationError on a bad
/// label or interval.
Annotation to_annotation(const AnnotationRecord& record, const VideoMeta& meta, int n_classes);
AnnotationRecord to_record(const Annotation& annotation, const VideoMeta& meta);

}  // namespace cbr
