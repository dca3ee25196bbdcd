#include "milfd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "milfd/error.hpp"
#include "milfd/rng.hpp"

namespace milfd {
namespace {

std::string video_id(const std::string& split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-v%05zu", index);
  return split + buf;
}

// Stored features are f32; rounding here keeps in-memory and on-disk data identical.
double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::size_t Dataset::tracklet_count() const {
  std::size_t n = 0;
  for (const auto& b : bags) n += b.tracklets.size();
  return n;
}

void SyntheticConfig::validate() const {
  if (dim == 0 || frames == 0) throw ConfigError("synthetic dim and frames must be positive");
  if (k_min == 0 || k_max < k_min) {
    throw ConfigError("synthetic K range must satisfy 1 <= k_min <= k_max");
  }
  if (!(fake_video_ratio > 0.0 && fake_video_ratio <= 1.0)) {
    throw ConfigError("fake video ratio must lie in (0, 1]");
  }
  if (fake_tracklet_ratio && !(*fake_tracklet_ratio > 0.0 && *fake_tracklet_ratio <= 1.0)) {
    throw ConfigError("fake tracklet ratio must lie in (0, 1]");
  }
  if (!(amplitude > 0.0) || !(omega > 0.0) || !(noise > 0.0) || !(prototype_scale > 0.0)) {
    throw ConfigError("synthetic amplitude, omega, noise and prototype scale must be positive");
  }
}

SplitSizes split_sizes(std::size_t videos) {
  SplitSizes s;
  s.val = videos / 7;
  s.test = videos / 7;
  s.train = videos - s.val - s.test;
  return s;
}

Matrix anomaly_direction(const SyntheticConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, "anomaly-direction"));
  Matrix u(cfg.dim, 1);
  double norm = 0.0;
  for (auto& v : u.data()) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : u.data()) v /= norm;
  return u;
}

Dataset generate_split(const SyntheticConfig& cfg, const std::string& split, std::size_t count) {
  cfg.validate();
  const Matrix u = anomaly_direction(cfg);

  // Exact fake count, positions shuffled per split.
  const auto fakes = static_cast<std::size_t>(std::llround(cfg.fake_video_ratio * static_cast<double>(count)));
  std::vector<int> labels(count, 0);
  for (std::size_t i = 0; i < fakes && i < count; ++i) labels[i] = 1;
  Rng label_rng(mix_seed(cfg.seed, "labels/" + split));
  label_rng.shuffle(labels);

  Dataset ds;
  ds.split = split;
  ds.bags.reserve(count);
  for (std::size_t v = 0; v < count; ++v) {
    Bag bag;
    bag.id = video_id(split, v);
    bag.label = labels[v];
    Rng rng(mix_seed(cfg.seed, bag.id));

    const std::size_t k = cfg.k_min + static_cast<std::size_t>(rng.below(cfg.k_max - cfg.k_min + 1));
    std::vector<int> fake(k, 0);
    if (bag.label == 1) {
      std::size_t n_fake = 1;
      if (cfg.fake_tracklet_ratio) {
        n_fake = static_cast<std::size_t>(std::ceil(*cfg.fake_tracklet_ratio * static_cast<double>(k)));
        n_fake = std::clamp<std::size_t>(n_fake, 1, k);
      }
      for (std::size_t i = 0; i < n_fake; ++i) fake[i] = 1;
      rng.shuffle(fake);
    }

    Matrix prototype(cfg.dim, 1);
    for (auto& x : prototype.data()) x = rng.normal(0.0, cfg.prototype_scale);

    for (std::size_t j = 0; j < k; ++j) {
      Tracklet tr;
      tr.id = bag.id + "-t" + std::to_string(j);
      tr.label = fake[j];
      tr.features = Matrix(cfg.dim, cfg.frames);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t t = 0; t < cfg.frames; ++t) {
        const double wave = fake[j] ? cfg.amplitude * std::sin(cfg.omega * static_cast<double>(t) + phase) : 0.0;
        for (std::size_t d = 0; d < cfg.dim; ++d) {
          const double x = prototype[d] + rng.normal(0.0, cfg.noise) + wave * u[d];
          tr.features(d, t) = to_f32(x);
        }
      }
      bag.tracklets.push_back(std::move(tr));
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  const SplitSizes sizes = split_sizes(cfg.videos);
  return {generate_split(cfg, "train", sizes.train), generate_split(cfg, "val", sizes.val),
          generate_split(cfg, "test", sizes.test)};
}

}  // namespace milfd
