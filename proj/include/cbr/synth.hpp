// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbr/features.hpp"
#include "cbr/sampling.hpp"

namespace cbr {

struct IntRange {
  int min = 1;
  int max = 1;
};

/// Gaussian class-conditional generator. Background units are N(0, sigma^2 I);
/// units inside a class-c instance are N(mu_c, sigma^2 I) where mu_c has norm
/// signal_strength and a direction fixed by (seed, c).
struct SynthSpec {
  int num_videos = 20;
  IntRange units_per_video{160, 240};
  int dim = 16;
  int n_classes = 3;
  IntRange instances_per_video{2, 4};
  IntRange instance_length_units{4, 24};
  double signal_strength = 4.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 7;

  static constexpr double kFps = 30.0;
  static constexpr std::uint32_t kUnitFrames = 16;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<UnitFeatureTable> tables;
  std::vector<Annotation> annotations;  // exact unit spans, ordered by video then start
  std::vector<std::string> class_names;
};

/// Unit vector of length dim; a pure function of (seed, class_id).
std::vector<double> class_direction(std::uint64_t seed, int class_id, int dim);

std::string synthetic_video_id(int index);

/// Deterministic in spec.seed. Throws GenerationError when the instances of a
/// video cannot be placed without overlap.
SyntheticDataset generate_dataset(const SynthSpec& spec);

}  // namespace cbr
