#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "milfd/binding.hpp"
#include "milfd/matrix.hpp"
#include "milfd/parameter.hpp"

namespace milfd {

// s = 0.9 * n / N for a sample taken at iteration n of N.
double pseudo_score(std::int64_t iteration, std::int64_t max_iteration);

struct QualitySample {
  Matrix feature;  // F x 1
  double score = 0.0;
  std::size_t domain = 0;
};

// Stand-in for generator snapshots:
//   x = c + (0.9 - s) * (artifact + noise_scale * z) + pattern[d]
// c is a clean prototype, artifact a fixed degradation pattern, z ~ N(0, I),
// and pattern[d] a fixed per-domain offset that carries no quality
// information. Degradation vanishes at s = 0.9.
struct QualityCorpusConfig {
  std::size_t samples = 6000;
  std::size_t feature_dim = 256;
  std::size_t domains = 3;
  std::int64_t max_iteration = 5000;
  double artifact_scale = 0.25;
  double noise_scale = 0.25;
  double domain_pattern_scale = 0.15;
  std::uint64_t seed = 11;
};

std::vector<QualitySample> generate_quality_corpus(const QualityCorpusConfig& cfg);

struct QNetConfig {
  std::size_t feature_dim = 256;
  std::size_t hidden = 64;
  std::size_t domains = 3;
  // Adversarial weight; 0 disables reversal (domain head trains on detached features).
  double alpha = 0.1;

  void validate() const;
};

struct QNetGraph {
  Var trunk;          // H x 1
  Var quality;        // 1 x 1, sigmoid-bounded
  Var domain_logits;  // N_dom x 1
};

class QNet {
 public:
  QNet(QNetConfig cfg, ParameterSet params);
  static QNet initialize(const QNetConfig& cfg, std::uint64_t seed);

  const QNetConfig& config() const noexcept { return cfg_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }

  // Domain head sees the trunk through gradient reversal (alpha > 0) or
  // stop-gradient (alpha == 0). The two-argument form uses config().alpha.
  QNetGraph forward(ParamBinding& bind, const Matrix& feature) const;
  QNetGraph forward(ParamBinding& bind, const Matrix& feature, double alpha) const;
  // Same network without the reversal, for differentiating the objective directly.
  QNetGraph forward_plain(ParamBinding& bind, const Matrix& feature) const;

  double score(const Matrix& feature) const;
  std::size_t predict_domain(const Matrix& feature) const;

 private:
  QNetGraph build(ParamBinding& bind, const Matrix& feature, std::optional<double> reversal) const;

  QNetConfig cfg_;
  ParameterSet params_;
};

struct QNetLoss {
  Var training;     // |s_hat - s| + CE on reversed features (what gets differentiated)
  double objective; // |s_hat - s| - alpha * CE, the adversarial objective's value
};

// alpha defaults to the network's configured strength.
QNetLoss qnet_loss(const QNet& net, ParamBinding& bind, const QualitySample& sample,
                   std::optional<double> alpha = std::nullopt);

struct QNetTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 3e-4;
  // The domain head learns this many times faster than the trunk so the
  // adversary keeps up with the reversed trunk updates.
  double domain_lr_scale = 10.0;
  // Ramp the reversal strength from 0 to alpha as 2 / (1 + exp(-10 p)) - 1
  // and anneal the learning rate as lr / (1 + 10 p)^0.75, p = training progress.
  bool alpha_ramp = true;
  // L2 penalty on the domain head per sample; keeps the adversary from
  // winning by growing its weights instead of finding domain signal.
  double domain_weight_decay = 0.0;
  bool lr_anneal = true;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 11;
};

struct QNetEpochStats {
  std::size_t epoch = 0;
  double train_objective = 0.0;
  double quality_mae = 0.0;      // held-out
  double domain_accuracy = 0.0;  // held-out
};

struct QNetHoldout {
  double quality_mae = 0.0;
  double domain_accuracy = 0.0;
};

QNetHoldout evaluate_qnet(const QNet& net, std::span<const QualitySample> samples);

std::vector<QNetEpochStats> train_qnet(QNet& net, const std::vector<QualitySample>& corpus,
                                       const QNetTrainConfig& cfg,
                                       const std::function<void(const QNetEpochStats&)>& on_epoch = {});

double score_face(const QNet& net, const Matrix& feature);

// Keep iff the mean score is strictly greater than 0.6. Means within the
// tolerance of the gate count as the boundary and are discarded.
inline constexpr double kQualityGate = 0.6;
inline constexpr double kQualityGateTolerance = 1e-12;
bool filter_tracklet(std::span<const double> scores);

}  // namespace milfd
