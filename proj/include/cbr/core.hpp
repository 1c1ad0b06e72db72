// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cbr {

enum class CoordSystem { Units, Frames, Seconds };

std::string_view to_string(CoordSystem system);

/// Half-open temporal span [start, end) tagged with its coordinate system.
struct TemporalInterval {
  double start = 0.0;
  double end = 0.0;
  CoordSystem system = CoordSystem::Units;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool valid() const { return start >= 0.0 && start < end; }

  friend bool operator==(const TemporalInterval&, const TemporalInterval&) = default;
};

inline TemporalInterval units(double start, double end) {
  return {start, end, CoordSystem::Units};
}

struct VideoMeta {
  std::string video_id;
  double fps = 30.0;
  std::uint32_t num_frames = 0;
  std::uint32_t unit_frames = 16;

  std::int64_t num_units() const { return unit_frames == 0 ? 0 : num_frames / unit_frames; }
  double duration_seconds() const { return num_frames / fps; }

  /// Throws ValidationError unless fps > 0, unit_frames >= 1 and num_units >= 1.
  void validate() const;

  friend bool operator==(const VideoMeta&, const VideoMeta&) = default;
};

/// Round half away from zero. This is the one rounding rule used for every
/// real-to-unit conversion in the library.
double round_half_away(double x);

/// Temporal intersection over union; 0 for disjoint intervals.
double tiou(const TemporalInterval& a, const TemporalInterval& b);

double seconds_to_frames(double t, const VideoMeta& meta);
double frames_to_seconds(double f, const VideoMeta& meta);

/// Rounded unit index of a frame coordinate, clamped to [0, num_units].
std::int64_t frames_to_units(double f, const VideoMeta& meta);

/// Exact (unrounded) conversions between interval coordinate systems.
TemporalInterval convert(const TemporalInterval& interval, CoordSystem to, const VideoMeta& meta);

}  // namespace cbr
