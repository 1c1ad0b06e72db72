// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/coords.hpp"

#include <cmath>

#include "cbr/error.hpp"

namespace cbr {

std::string_view to_string(OffsetScheme scheme) {
  switch (scheme) {
    case OffsetScheme::Parameterized:
      return "param";
    case OffsetScheme::BoundaryFrame:
      return "frame";
    case OffsetScheme::BoundaryUnit:
      return "unit";
  }
  return "?";
}

std::optional<OffsetScheme> parse_offset_scheme(std::string_view name) {
  if (name == "param") return OffsetScheme::Parameterized;
  if (name == "frame") return OffsetScheme::BoundaryFrame;
  if (name == "unit") return OffsetScheme::BoundaryUnit;
  return std::nullopt;
}

OffsetPair encode_offsets(const TemporalInterval& clip, const TemporalInterval& gt, OffsetScheme scheme) {
  if (clip.system != gt.system) {
    throw CoordinateSystemError("encode_offsets: clip and ground truth in different coordinate systems");
  }
  switch (scheme) {
    case OffsetScheme::Parameterized: {
      if (!(clip.length() > 0.0)) throw DegenerateClipError("encode_offsets: zero-length clip");
      if (!(gt.length() > 0.0)) throw DegenerateClipError("encode_offsets: zero-length ground truth");
      return {(gt.center() - clip.center()) / clip.length(), std::log(gt.length() / clip.length()), scheme};
    }
    case OffsetScheme::BoundaryFrame:
      if (clip.system != CoordSystem::Frames) {
        throw CoordinateSystemError("encode_offsets: frame-level offsets need frame coordinates");
      }
      return {clip.start - gt.start, clip.end - gt.end, scheme};
    case OffsetScheme::BoundaryUnit: {
      if (clip.system != CoordSystem::Units) {
        throw CoordinateSystemError("encode_offsets: unit-level offsets need unit coordinates");
      }
      const double s = round_half_away(gt.start);
      const double e = round_half_away(gt.end);
      if (!(e > s)) throw DegenerateClipError("encode_offsets: ground truth rounds to an empty unit span");
      return {clip.start - s, clip.end - e, scheme};
    }
  }
  throw ContractError("encode_offsets: unknown scheme");
}

std::optional<TemporalInterval> decode_offsets(const TemporalInterval& clip, const OffsetPair& offsets) {
  TemporalInterval out{0.0, 0.0, clip.system};
  if (offsets.scheme == OffsetScheme::Parameterized) {
    const double x = clip.center() + offsets.first * clip.length();
    const double l = clip.length() * std::exp(offsets.second);
    out.start = x - 0.5 * l;
    out.end = x + 0.5 * l;
  } else {
    out.start = clip.start - offsets.first;
    out.end = clip.end - offsets.second;
  }
  if (!std::isfinite(out.start) || !std::isfinite(out.end) || !(out.end > out.start)) return std::nullopt;
  return out;
}

OffsetPair encode_target(const TemporalInterval& window, const TemporalInterval& gt, const VideoMeta& meta,
                         OffsetScheme scheme) {
  if (scheme == OffsetScheme::BoundaryFrame) {
    return encode_offsets(convert(window, CoordSystem::Frames, meta), convert(gt, CoordSystem::Frames, meta),
                          scheme);
  }
  return encode_offsets(window, convert(gt, window.system, meta), scheme);
}

std::optional<TemporalInterval> apply_offsets(const TemporalInterval& window, const OffsetPair& offsets,
                                              const VideoMeta& meta) {
  if (offsets.scheme == OffsetScheme::BoundaryFrame) {
    auto decoded = decode_offsets(convert(window, CoordSystem::Frames, meta), offsets);
    if (!decoded) return std::nullopt;
    return convert(*decoded, window.system, meta);
  }
  return decode_offsets(window, offsets);
}

}  // namespace cbr
