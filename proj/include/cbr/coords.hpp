// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cbr/core.hpp"

namespace cbr {

/// Regression target parameterizations.
///   Parameterized  (o_x, o_l) = ((x_gt - x_clip) / l_clip, ln(l_gt / l_clip))
///   BoundaryFrame  (o_s, o_e) = (s_clip - s_gt, e_clip - e_gt) in frames
///   BoundaryUnit   (o_s, o_e) = same, in units, with the ground truth rounded
enum class OffsetScheme { Parameterized, BoundaryFrame, BoundaryUnit };

/// CLI names: "param", "frame", "unit".
std::string_view to_string(OffsetScheme scheme);
std::optional<OffsetScheme> parse_offset_scheme(std::string_view name);

struct OffsetPair {
  double first = 0.0;
  double second = 0.0;
  OffsetScheme scheme = OffsetScheme::BoundaryUnit;

  friend bool operator==(const OffsetPair&, const OffsetPair&) = default;
};

/// Both intervals must share a coordinate system; BoundaryUnit requires Units
/// and BoundaryFrame requires Frames. For BoundaryUnit the ground truth
/// endpoints are rounded half away from zero before differencing.
OffsetPair encode_offsets(const TemporalInterval& clip, const TemporalInterval& gt, OffsetScheme scheme);

/// Inverse of encode_offsets. Returns nullopt when the decoded interval is
/// degenerate (end <= start) or not finite. No clamping happens here.
std::optional<TemporalInterval> decode_offsets(const TemporalInterval& clip, const OffsetPair& offsets);

// The pipeline keeps windows and annotations as real-valued unit coordinates.
// These convert to the scheme's regression space and back.

OffsetPair encode_target(const TemporalInterval& window, const TemporalInterval& gt, const VideoMeta& meta,
                         OffsetScheme scheme);
std::optional<TemporalInterval> apply_offsets(const TemporalInterval& window, const OffsetPair& offsets,
                                              const VideoMeta& meta);

}  // namespace cbr
