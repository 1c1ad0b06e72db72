// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cbr/error.hpp"

namespace cbr {

UnitFeatureTable::UnitFeatureTable(VideoMeta meta, std::size_t dim, std::vector<float> data)
    : meta_(std::move(meta)), dim_(dim), data_(std::move(data)) {
  meta_.validate();
  if (dim_ == 0) throw ShapeError("feature table: dim must be >= 1");
  const auto expected = static_cast<std::size_t>(meta_.num_units()) * dim_;
  if (data_.size() != expected) {
    throw ShapeError("feature table '" + meta_.video_id + "': expected " + std::to_string(expected) +
                     " values, got " + std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw DataError("feature table '" + meta_.video_id + "': non-finite value at unit " +
                      std::to_string(i / dim_));
    }
  }
}

std::span<const float> UnitFeatureTable::row(std::int64_t unit) const {
  if (unit < 0 || unit >= num_units()) {
    throw BoundsError("feature table: unit " + std::to_string(unit) + " out of range");
  }
  return {data_.data() + static_cast<std::size_t>(unit) * dim_, dim_};
}

UnitSpan to_unit_span(const TemporalInterval& clip, std::int64_t num_units) {
  auto start = static_cast<std::int64_t>(round_half_away(clip.start));
  auto end = static_cast<std::int64_t>(round_half_away(clip.end));
  if (end <= start) {
    if (start < num_units) {
      end = start + 1;
    } else {
      start = end - 1;
    }
  }
  return {start, end};
}

namespace {

void accumulate_mean(const UnitFeatureTable& table, std::int64_t begin, std::int64_t end,
                     std::span<double> out) {
  begin = std::max<std::int64_t>(begin, 0);
  end = std::min(end, table.num_units());
  if (end <= begin) return;  // stays zero
  for (std::int64_t u = begin; u < end; ++u) {
    const auto r = table.row(u);
    for (std::size_t d = 0; d < r.size(); ++d) out[d] += r[d];
  }
  const double n = static_cast<double>(end - begin);
  for (double& v : out) v /= n;
}

}  // namespace

std::vector<double> pool_clip_feature(const UnitFeatureTable& table, UnitSpan span,
                                      const PoolingConfig& cfg) {
  if (cfg.n_ctx < 0) throw ValidationError("n_ctx: must be >= 0");
  if (span.start < 0 || span.end > table.num_units() || span.end <= span.start) {
    throw BoundsError("pool_clip_feature: clip [" + std::to_string(span.start) + ", " +
                      std::to_string(span.end) + ") outside video of " +
                      std::to_string(table.num_units()) + " units");
  }
  const std::size_t dim = table.dim();
  std::vector<double> out(3 * dim, 0.0);
  std::span<double> all(out);
  accumulate_mean(table, span.start - cfg.n_ctx, span.start, all.subspan(0, dim));
  accumulate_mean(table, span.start, span.end, all.subspan(dim, dim));
  accumulate_mean(table, span.end, span.end + cfg.n_ctx, all.subspan(2 * dim, dim));
  return out;
}

std::vector<double> pool_clip_feature(const UnitFeatureTable& table, const TemporalInterval& clip,
                                      const PoolingConfig& cfg) {
  if (clip.system != CoordSystem::Units) {
    throw CoordinateSystemError("pool_clip_feature: clip must be in units");
  }
  const double n = static_cast<double>(table.num_units());
  if (!(clip.start >= 0.0) || !(clip.end <= n) || !(clip.start < clip.end)) {
    throw BoundsError("pool_clip_feature: clip [" + std::to_string(clip.start) + ", " +
                      std::to_string(clip.end) + ") outside video of " +
                      std::to_string(table.num_units()) + " units");
  }
  return pool_clip_feature(table, to_unit_span(clip, table.num_units()), cfg);
}

// ---------------------------------------------------------------------------
// Binary format

namespace {

constexpr std::size_t kHeaderBytes = 4 + 6 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

}  // namespace

std::vector<std::uint8_t> encode_feature_table(const UnitFeatureTable& table) {
  const auto& meta = table.meta();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + table.data().size() * 4);
  out.insert(out.end(), {'C', 'B', 'R', 'F'});
  put_u32(out, kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(table.num_units()));
  put_u32(out, static_cast<std::uint32_t>(table.dim()));
  put_f32(out, static_cast<float>(meta.fps));
  put_u32(out, meta.num_frames);
  put_u32(out, meta.unit_frames);
  for (float v : table.data()) put_f32(out, v);
  return out;
}

UnitFeatureTable decode_feature_table(std::span<const std::uint8_t> bytes, std::string video_id) {
  if (bytes.size() < kHeaderBytes) throw FormatError("feature file: truncated header");
  if (std::memcmp(bytes.data(), "CBRF", 4) != 0) throw FormatError("feature file: bad magic");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureFormatVersion) {
    throw FormatError("feature file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t num_units = get_u32(bytes, 8);
  const std::uint32_t dim = get_u32(bytes, 12);
  VideoMeta meta;
  meta.video_id = std::move(video_id);
  meta.fps = get_f32(bytes, 16);
  meta.num_frames = get_u32(bytes, 20);
  meta.unit_frames = get_u32(bytes, 24);
  if (meta.unit_frames == 0 || meta.num_units() != num_units) {
    throw FormatError("feature file: num_units does not match num_frames / unit_frames");
  }
  const std::uint64_t count = static_cast<std::uint64_t>(num_units) * dim;
  if (bytes.size() != kHeaderBytes + count * 4) {
    throw FormatError("feature file: payload size " + std::to_string(bytes.size() - kHeaderBytes) +
                      " bytes, expected " + std::to_string(count * 4));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = get_f32(bytes, kHeaderBytes + 4 * i);
  }
  try {
    return UnitFeatureTable(std::move(meta), dim, std::move(data));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("feature file: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("feature file: ") + e.what());
  }
}

UnitFeatureTable load_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_table(bytes, path.stem().string());
}

void save_feature_table(const UnitFeatureTable& table, const std::filesystem::path& path) {
  const auto bytes = encode_feature_table(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write feature file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing feature file " + path.string());
}

}  // namespace cbr
