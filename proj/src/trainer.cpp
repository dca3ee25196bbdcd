#include "milfd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "milfd/adam.hpp"
#include "milfd/error.hpp"

namespace milfd {
namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!(jitter >= 0.0)) throw ConfigError("jitter must be >= 0");
}

json to_json(const TrainConfig& cfg) {
  return {{"lr", cfg.lr},       {"batch_size", cfg.batch_size}, {"beta", cfg.beta},
          {"sparsity", cfg.sparsity}, {"epochs", cfg.epochs}, {"seed", cfg.seed},
          {"threshold", cfg.threshold}, {"jitter", cfg.jitter}};
}

void apply_json(const json& j, TrainConfig& cfg) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const std::set<std::string> known{"lr", "batch_size", "beta", "sparsity", "epochs",
                                           "seed", "threshold", "jitter", "eval_threads"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown train config key '" + key + "'");
  }
  read(j, "lr", cfg.lr);
  read(j, "batch_size", cfg.batch_size);
  read(j, "beta", cfg.beta);
  read(j, "sparsity", cfg.sparsity);
  read(j, "epochs", cfg.epochs);
  read(j, "seed", cfg.seed);
  read(j, "threshold", cfg.threshold);
  read(j, "jitter", cfg.jitter);
  read(j, "eval_threads", cfg.eval_threads);
}

json to_json(const EpochLog& log) {
  return {{"epoch", log.epoch},     {"steps", log.steps},     {"mean_loss", log.mean_loss},
          {"val_auc", log.val_auc}, {"val_acc", log.val_acc}, {"val_map", log.val_map},
          {"best", log.best},       {"seconds", log.seconds}};
}

double accumulate_gradients(Model& model, std::span<const Bag* const> bags, double beta,
                            double jitter, Rng* jitter_rng) {
  double total = 0.0;
  for (const Bag* bag : bags) {
    std::vector<Matrix> features = bag->features();
    if (jitter > 0.0 && jitter_rng) {
      for (auto& m : features)
        for (auto& v : m.data()) v += jitter * jitter_rng->normal();
    }
    Tape tape;
    ParamBinding bind(tape, model.params());
    const BagGraph graph = model.forward(bind, features);
    Var loss = compute_loss(graph, bag->label, beta, model.config().sparsity_target);
    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      throw DivergenceError("non-finite loss on bag '" + bag->id + "'");
    }
    tape.backward(loss);
    total += value;
  }
  return total;
}

TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train,
                        const Dataset& val, const EpochCallback& on_epoch) {
  return train_model(Model::initialize(model_cfg, mix_seed(cfg.seed, "model-init")), cfg, train, val,
                     on_epoch);
}

TrainResult train_model(Model model, const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.bags.empty()) throw DataError("training split '" + train.split + "' is empty");
  if (val.bags.empty()) throw DataError("validation split '" + val.split + "' is empty");

  Adam adam(AdamConfig{.lr = cfg.lr});
  std::vector<const Bag*> order;
  for (const auto& b : train.bags) order.push_back(&b);

  std::optional<Model> best;
  TrainResult result{model, 0, 0.0, 0, {}};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, "epoch-order/" + std::to_string(epoch)));
    // Always permute the canonical order so each epoch's order depends only on (seed, epoch).
    order.clear();
    for (const auto& b : train.bags) order.push_back(&b);
    shuffle_rng.shuffle(order);
    Rng jitter_rng(mix_seed(cfg.seed, "jitter/" + std::to_string(epoch)));

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      model.params().zero_grad();
      loss_sum += accumulate_gradients(model, std::span(order).subspan(begin, end - begin),
                                       cfg.effective_beta(), cfg.jitter, &jitter_rng);
      adam.step(model.params());
    }

    const Evaluation ev = evaluate(model, val, cfg.threshold, cfg.eval_threads);
    EpochLog log;
    log.epoch = epoch;
    log.steps = adam.step_count();
    log.mean_loss = loss_sum / static_cast<double>(order.size());
    log.val_auc = ev.report.video_auc;
    log.val_acc = ev.report.video_acc;
    log.val_map = ev.report.localization_map;
    log.best = !best || log.val_auc > result.best_val_auc;
    if (log.best) {
      best = model;
      result.best_epoch = epoch;
      result.best_val_auc = log.val_auc;
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(log);
    if (on_epoch) on_epoch(log, model);
  }
  result.best_model = std::move(*best);
  result.steps = adam.step_count();
  return result;
}

}  // namespace milfd
