#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "milfd/bag_model.hpp"

namespace milfd {

struct Dataset {
  std::string split;
  std::vector<Bag> bags;

  std::size_t tracklet_count() const;
};

// Planted-signal generator. Real tracklet frames are b + noise with one
// Gaussian prototype b per video; fake tracklets add
// amplitude * sin(omega * t + phase) * u along a dataset-wide unit direction u.
// The oscillation is zero-mean over whole periods, so it hides from per-frame
// averages and only shows up through temporal structure.
struct SyntheticConfig {
  std::size_t videos = 2800;
  std::size_t dim = 64;
  std::size_t frames = 32;
  std::size_t k_min = 1;
  std::size_t k_max = 8;
  double fake_video_ratio = 0.5;
  // Unset: exactly one fake tracklet per fake video.
  std::optional<double> fake_tracklet_ratio;
  double amplitude = 0.5;
  double omega = std::numbers::pi / 4.0;
  double noise = 0.1;
  // Std of the per-video prototype entries. Much larger than the oscillation
  // and a model can fit 2000 prototypes before it finds the temporal signal.
  double prototype_scale = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};

// val = test = floor(videos / 7), train gets the rest (2800 -> 2000/400/400).
SplitSizes split_sizes(std::size_t videos);

// The dataset-wide anomaly direction for a seed (unit norm).
Matrix anomaly_direction(const SyntheticConfig& cfg);

// Generates one split. Streams are keyed by (seed, split, video index), so
// splits are independent and video ids are disjoint across splits.
Dataset generate_split(const SyntheticConfig& cfg, const std::string& split, std::size_t count);

struct SyntheticDataset {
  Dataset train, val, test;
};

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg);

}  // namespace milfd
