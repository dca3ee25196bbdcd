#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "milfd/binding.hpp"
#include "milfd/instance_agg.hpp"
#include "milfd/parameter.hpp"
#include "milfd/tape.hpp"

namespace milfd {

// One video: K >= 1 tracklets and a video-level label.
struct Bag {
  std::string id;
  std::vector<Tracklet> tracklets;
  int label = 0;  // 0 real, 1 fake

  std::vector<Matrix> features() const;
};

enum class BagVariant { attention, max_pooling, avg_pooling };

BagVariant parse_bag_variant(std::string_view name);
std::string_view to_string(BagVariant v);

// What the sparsity penalty is applied to.
//   scores:             g = sigmoid(e), per-tracklet fake scores (default)
//   softmax_attention:  a = softmax(e); ||a||_1 is identically 1 (constant)
enum class SparsityTarget { scores, softmax_attention };

SparsityTarget parse_sparsity_target(std::string_view name);
std::string_view to_string(SparsityTarget t);

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t attention_width = 128;
  ShortTermConfig short_term;
  InstanceVariant instance_variant = InstanceVariant::full;
  BagVariant bag_variant = BagVariant::attention;
  SparsityTarget sparsity_target = SparsityTarget::scores;

  void validate() const;
};

// Graph handles for one bag forward pass.
struct BagGraph {
  std::vector<Var> descriptors;  // Y_k, each D x 1
  Var attention_logits;          // e, K x 1
  Var attention;                 // a = softmax(e), K x 1
  Var scores;                    // g = sigmoid(e), K x 1
  Var bag_feature;               // O_V, D x 1
  Var logit;                     // 1 x 1
};

struct ModelOutput {
  double probability = 0.5;
  double logit = 0.0;
  std::vector<double> attention;
  std::vector<double> attention_logits;
  std::vector<double> scores;
  Matrix bag_feature;
};

// Parameters plus the configuration that shapes them.
class Model {
 public:
  Model(ModelConfig cfg, ParameterSet params);
  static Model initialize(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }

  BagGraph forward(ParamBinding& bind, std::span<const Matrix> tracklets) const;
  // Read-only inference; safe to call concurrently on a shared model.
  ModelOutput predict(std::span<const Matrix> tracklets) const;

 private:
  ModelConfig cfg_;
  ParameterSet params_;
};

// (a, e): e_k = w^T tanh(W^T Y_k), a = softmax(e).
std::pair<Var, Var> attention_weights(const std::vector<Var>& descriptors, Var W, Var w);
// O_V = sum_k a_k Y_k.
Var bag_aggregate(const std::vector<Var>& descriptors, Var attention);
Var bag_aggregate_variant(const std::vector<Var>& descriptors, Var attention, BagVariant v);
// head^T O_V + bias, as a logit.
Var classify(Var bag_feature, Var head, Var bias);

// BCE(logit, label) + beta * ||target||_1.
Var compute_loss(const BagGraph& graph, int label, double beta, SparsityTarget target);

// Indices with score strictly above threshold.
std::vector<std::size_t> localize(const ModelOutput& out, double threshold = 0.75);

ModelOutput to_output(const BagGraph& graph);

}  // namespace milfd
