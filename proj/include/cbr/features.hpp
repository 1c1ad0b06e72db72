// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cbr/core.hpp"

namespace cbr {

/// Unit-level features of one video: row i is the feature of unit i.
/// Immutable after construction; the constructor enforces the invariants.
class UnitFeatureTable {
 public:
  UnitFeatureTable() = default;
  /// `data` is row-major num_units x dim. Throws ShapeError / DataError.
  UnitFeatureTable(VideoMeta meta, std::size_t dim, std::vector<float> data);

  const VideoMeta& meta() const { return meta_; }
  std::size_t dim() const { return dim_; }
  std::int64_t num_units() const { return meta_.num_units(); }
  std::span<const float> row(std::int64_t unit) const;
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const UnitFeatureTable&, const UnitFeatureTable&) = default;

 private:
  VideoMeta meta_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

struct PoolingConfig {
  int n_ctx = 4;
};

/// Whole-unit span used for pooling, [start, end).
struct UnitSpan {
  std::int64_t start = 0;
  std::int64_t end = 0;
};

/// Rounds a real-valued unit interval to whole units. A span that rounds to
/// zero length is widened to one unit, staying within [0, num_units).
UnitSpan to_unit_span(const TemporalInterval& clip, std::int64_t num_units);

/// [mean(pre-context) | mean(internal) | mean(post-context)], length 3 * dim.
/// Context ranges are [start - n_ctx, start) and [end, end + n_ctx),
/// truncated at the video bounds; an empty range contributes zeros.
std::vector<double> pool_clip_feature(const UnitFeatureTable& table, const TemporalInterval& clip,
                                      const PoolingConfig& cfg);
std::vector<double> pool_clip_feature(const UnitFeatureTable& table, UnitSpan span,
                                      const PoolingConfig& cfg);

// Binary feature file, little-endian:
//   "CBRF" | u32 version=1 | u32 num_units | u32 dim | f32 fps | u32 num_frames
//   | u32 unit_frames | f32 payload[num_units * dim], row-major
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

/// The video id of a loaded table is the file stem.
UnitFeatureTable load_feature_table(const std::filesystem::path& path);
void save_feature_table(const UnitFeatureTable& table, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_feature_table(const UnitFeatureTable& table);
UnitFeatureTable decode_feature_table(std::span<const std::uint8_t> bytes, std::string video_id);

}  // namespace cbr
