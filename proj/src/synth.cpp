// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#include "cbr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cbr/error.hpp"
#include "cbr/rng.hpp"

namespace cbr {

void SynthSpec::validate() const {
  auto range = [](const IntRange& r, const char* name) {
    if (r.min < 1 || r.max < r.min) throw ValidationError(std::string(name) + ": need 1 <= min <= max");
  };
  if (num_videos < 1) throw ValidationError("num_videos: must be >= 1");
  range(units_per_video, "units_per_video");
  if (dim < 1) throw ValidationError("dim: must be >= 1");
  if (n_classes < 1) throw ValidationError("n_classes: must be >= 1");
  range(instances_per_video, "instances_per_video");
  range(instance_length_units, "instance_length_units");
  if (!(signal_strength >= 0.0)) throw ValidationError("signal_strength: must be >= 0");
  if (!(noise_sigma > 0.0)) throw ValidationError("noise_sigma: must be positive");
}

std::vector<double> class_direction(std::uint64_t seed, int class_id, int dim) {
  Rng rng(mix_seed(seed, 0x636c617373ULL + static_cast<std::uint64_t>(class_id)));
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = rng.normal();
    norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
  }
  for (double& x : v) x /= norm;
  return v;
}

std::string synthetic_video_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video_%04d", index);
  return buf;
}

SyntheticDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  for (int c = 1; c <= spec.n_classes; ++c) out.class_names.push_back("class_" + std::to_string(c));

  std::vector<std::vector<double>> means;
  for (int c = 1; c <= spec.n_classes; ++c) {
    auto dir = class_direction(spec.seed, c, spec.dim);
    for (double& x : dir) x *= spec.signal_strength;
    means.push_back(std::move(dir));
  }

  constexpr int kPlacementAttempts = 200;
  Rng rng(spec.seed);
  for (int v = 0; v < spec.num_videos; ++v) {
    const auto id = synthetic_video_id(v);
    const auto n_units = rng.uniform_int(spec.units_per_video.min, spec.units_per_video.max);
    const auto n_instances = rng.uniform_int(spec.instances_per_video.min, spec.instances_per_video.max);

    // Instances keep at least one background unit between them.
    std::vector<Annotation> placed;
    for (std::int64_t k = 0; k < n_instances; ++k) {
      bool ok = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
        const auto len = rng.uniform_int(spec.instance_length_units.min, spec.instance_length_units.max);
        if (len > n_units) continue;
        const auto start = rng.uniform_int(0, n_units - len);
        const auto end = start + len;
        ok = std::none_of(placed.begin(), placed.end(), [&](const Annotation& a) {
          return start <= a.interval.end && a.interval.start <= end;
        });
        if (ok) {
          const int label = static_cast<int>(rng.uniform_int(1, spec.n_classes));
          placed.push_back({id, units(static_cast<double>(start), static_cast<double>(end)), label});
        }
      }
      if (!ok) {
        throw GenerationError("generate_dataset: cannot place " + std::to_string(n_instances) +
                              " non-overlapping instances in " + id + " (" + std::to_string(n_units) +
                              " units); reduce instances_per_video or instance_length_units");
      }
    }
    std::sort(placed.begin(), placed.end(),
              [](const Annotation& a, const Annotation& b) { return a.interval.start < b.interval.start; });

    std::vector<int> unit_label(static_cast<std::size_t>(n_units), 0);
    for (const auto& a : placed) {
      for (auto u = static_cast<std::int64_t>(a.interval.start); u < static_cast<std::int64_t>(a.interval.end); ++u) {
        unit_label[static_cast<std::size_t>(u)] = a.label;
      }
    }
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(n_units * spec.dim));
    for (std::int64_t u = 0; u < n_units; ++u) {
      const int label = unit_label[static_cast<std::size_t>(u)];
      for (int d = 0; d < spec.dim; ++d) {
        const double mean = label == 0 ? 0.0 : means[static_cast<std::size_t>(label - 1)][static_cast<std::size_t>(d)];
        data.push_back(static_cast<float>(rng.normal(mean, spec.noise_sigma)));
      }
    }
    VideoMeta meta{id, SynthSpec::kFps, static_cast<std::uint32_t>(n_units) * SynthSpec::kUnitFrames,
                   SynthSpec::kUnitFrames};
    out.tables.emplace_back(std::move(meta), static_cast<std::size_t>(spec.dim), std::move(data));
    out.annotations.insert(out.annotations.end(), placed.begin(), placed.end());
  }
  return out;
}

}  // namespace cbr
