// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/core.hpp"

#include <algorithm>
#include <cmath>

#include "cbr/error.hpp"

namespace cbr {

std::string_view to_string(CoordSystem system) {
  switch (system) {
    case CoordSystem::Units:
      return "units";
    case CoordSystem::Frames:
      return "frames";
    case CoordSystem::Seconds:
      return "seconds";
  }
  return "?";
}

void VideoMeta::validate() const {
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw ValidationError("video '" + video_id + "': fps must be positive");
  }
  if (unit_frames < 1) {
    throw ValidationError("video '" + video_id + "': unit_frames must be >= 1");
  }
  if (num_units() < 1) {
    throw ValidationError("video '" + video_id + "': shorter than one unit");
  }
}

double round_half_away(double x) { return std::round(x); }

double tiou(const TemporalInterval& a, const TemporalInterval& b) {
  if (a.system != b.system) {
    throw CoordinateSystemError("tiou: intervals in different coordinate systems (" +
                                std::string(to_string(a.system)) + " vs " +
                                std::string(to_string(b.system)) + ")");
  }
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double seconds_to_frames(double t, const VideoMeta& meta) {
  if (!(t >= 0.0)) throw DomainError("seconds_to_frames: negative time");
  return t * meta.fps;
}

double frames_to_seconds(double f, const VideoMeta& meta) {
  if (!(f >= 0.0)) throw DomainError("frames_to_seconds: negative frame coordinate");
  return f / meta.fps;
}

std::int64_t frames_to_units(double f, const VideoMeta& meta) {
  if (!(f >= 0.0)) throw DomainError("frames_to_units: negative frame coordinate");
  const double u = round_half_away(f / static_cast<double>(meta.unit_frames));
  return static_cast<std::int64_t>(std::clamp(u, 0.0, static_cast<double>(meta.num_units())));
}

namespace {

double to_frames(double v, CoordSystem from, const VideoMeta& meta) {
  switch (from) {
    case CoordSystem::Units:
      return v * meta.unit_frames;
    case CoordSystem::Frames:
      return v;
    case CoordSystem::Seconds:
      return v * meta.fps;
  }
  return v;
}

double from_frames(double f, CoordSystem to, const VideoMeta& meta) {
  switch (to) {
    case CoordSystem::Units:
      return f / meta.unit_frames;
    case CoordSystem::Frames:
      return f;
    case CoordSystem::Seconds:
      return f / meta.fps;
  }
  return f;
}

}  // namespace

TemporalInterval convert(const TemporalInterval& interval, CoordSystem to, const VideoMeta& meta) {
  if (interval.system == to) return interval;
  return {from_frames(to_frames(interval.start, interval.system, meta), to, meta),
          from_frames(to_frames(interval.end, interval.system, meta), to, meta), to};
}

}  // namespace cbr
