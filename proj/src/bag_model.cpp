#include "milfd/bag_model.hpp"

#include <cmath>

#include "milfd/error.hpp"
#include "milfd/ops.hpp"
#include "milfd/rng.hpp"

namespace milfd {
namespace {

constexpr std::string_view kShortPrefix = "instance.short.";

Matrix uniform_fan_in(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

std::vector<double> column_values(const Matrix& m) {
  return std::vector<double>(m.data().begin(), m.data().end());
}

}  // namespace

std::vector<Matrix> Bag::features() const {
  std::vector<Matrix> out;
  out.reserve(tracklets.size());
  for (const auto& t : tracklets) out.push_back(t.features);
  return out;
}

BagVariant parse_bag_variant(std::string_view name) {
  if (name == "attention") return BagVariant::attention;
  if (name == "max_pooling") return BagVariant::max_pooling;
  if (name == "avg_pooling") return BagVariant::avg_pooling;
  throw ConfigError("unknown bag variant '" + std::string(name) + "'");
}

std::string_view to_string(BagVariant v) {
  switch (v) {
    case BagVariant::attention: return "attention";
    case BagVariant::max_pooling: return "max_pooling";
    case BagVariant::avg_pooling: return "avg_pooling";
  }
  return "attention";
}

SparsityTarget parse_sparsity_target(std::string_view name) {
  if (name == "scores") return SparsityTarget::scores;
  if (name == "softmax_attention") return SparsityTarget::softmax_attention;
  throw ConfigError("unknown sparsity target '" + std::string(name) + "'");
}

std::string_view to_string(SparsityTarget t) {
  return t == SparsityTarget::scores ? "scores" : "softmax_attention";
}

void ModelConfig::validate() const {
  if (dim == 0) throw ConfigError("feature dimension must be positive");
  if (attention_width == 0) throw ConfigError("attention width must be positive");
  short_term.validate();
}

Model::Model(ModelConfig cfg, ParameterSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
}

Model Model::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParameterSet ps;
  if (uses_short_term(cfg.instance_variant)) {
    init_short_term_params(ps, kShortPrefix, cfg.dim, cfg.short_term, rng);
  }
  ps.add("bag.attention.W", uniform_fan_in(rng, cfg.dim, cfg.attention_width, cfg.dim));
  ps.add("bag.attention.w", uniform_fan_in(rng, cfg.attention_width, 1, cfg.attention_width));
  ps.add("head.weight", uniform_fan_in(rng, cfg.dim, 1, cfg.dim));
  ps.add("head.bias", Matrix(1, 1, 0.0));
  return Model(cfg, std::move(ps));
}

std::pair<Var, Var> attention_weights(const std::vector<Var>& descriptors, Var W, Var w) {
  if (descriptors.empty()) throw DimensionError("attention over an empty bag");
  Var y = concat_cols(descriptors);  // D x K
  if (W.rows() != y.rows() || w.rows() != W.cols() || w.cols() != 1) {
    throw DimensionError("attention parameters W " + W.value().shape_string() + ", w " +
                         w.value().shape_string() + " do not fit descriptors " +
                         y.value().shape_string());
  }
  Var hidden = tanh(matmul(transpose(W), y));  // C x K
  Var e = transpose(matmul(transpose(w), hidden));  // K x 1
  return {softmax_columns(e), e};
}

Var bag_aggregate(const std::vector<Var>& descriptors, Var attention) {
  if (attention.rows() != descriptors.size() || attention.cols() != 1) {
    throw DimensionError("attention " + attention.value().shape_string() + " for " +
                         std::to_string(descriptors.size()) + " descriptors");
  }
  return matmul(concat_cols(descriptors), attention);
}

Var bag_aggregate_variant(const std::vector<Var>& descriptors, Var attention, BagVariant v) {
  switch (v) {
    case BagVariant::attention: return bag_aggregate(descriptors, attention);
    case BagVariant::max_pooling: return maxpool_time(concat_cols(descriptors));
    case BagVariant::avg_pooling: return meanpool_time(concat_cols(descriptors));
  }
  throw ConfigError("unknown bag variant");
}

Var classify(Var bag_feature, Var head, Var bias) {
  if (head.rows() != bag_feature.rows() || head.cols() != 1 || bias.rows() != 1 ||
      bias.cols() != 1) {
    throw DimensionError("head " + head.value().shape_string() + " / bias " +
                         bias.value().shape_string() + " do not fit bag feature " +
                         bag_feature.value().shape_string());
  }
  return add(matmul(transpose(head), bag_feature), bias);
}

BagGraph Model::forward(ParamBinding& bind, std::span<const Matrix> tracklets) const {
  if (tracklets.empty()) throw DataError("bag has no tracklets");
  Tape& tape = bind.tape();
  BagGraph g;
  for (const Matrix& x : tracklets) {
    if (x.rows() != cfg_.dim) {
      throw DataError("tracklet dimension " + std::to_string(x.rows()) +
                      " does not match model dimension " + std::to_string(cfg_.dim));
    }
    if (x.cols() == 0) throw DataError("tracklet has no frames");
    g.descriptors.push_back(aggregate_instance(tape.constant(x), cfg_.short_term, bind,
                                               kShortPrefix, cfg_.instance_variant));
  }
  auto [a, e] = attention_weights(g.descriptors, bind("bag.attention.W"), bind("bag.attention.w"));
  g.attention = a;
  g.attention_logits = e;
  g.scores = sigmoid(e);
  g.bag_feature = bag_aggregate_variant(g.descriptors, a, cfg_.bag_variant);
  g.logit = classify(g.bag_feature, bind("head.weight"), bind("head.bias"));
  return g;
}

ModelOutput to_output(const BagGraph& g) {
  ModelOutput out;
  out.logit = g.logit.scalar();
  out.probability = 1.0 / (1.0 + std::exp(-out.logit));
  out.attention = column_values(g.attention.value());
  out.attention_logits = column_values(g.attention_logits.value());
  out.scores = column_values(g.scores.value());
  out.bag_feature = g.bag_feature.value();
  return out;
}

ModelOutput Model::predict(std::span<const Matrix> tracklets) const {
  Tape tape;
  ParamBinding bind(tape, params_);
  return to_output(forward(bind, tracklets));
}

Var compute_loss(const BagGraph& graph, int label, double beta, SparsityTarget target) {
  if (beta < 0.0) throw ConfigError("sparsity weight beta must be >= 0");
  Var loss = binary_cross_entropy(graph.logit, label);
  if (beta == 0.0) return loss;
  Var penalized = target == SparsityTarget::scores ? graph.scores : graph.attention;
  return add(loss, scale(l1_norm(penalized), beta));
}

std::vector<std::size_t> localize(const ModelOutput& out, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("localization threshold must lie in (0, 1)");
  }
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < out.scores.size(); ++k)
    if (out.scores[k] > threshold) picked.push_back(k);
  return picked;
}

}  // namespace milfd
