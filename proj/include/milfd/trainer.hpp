#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "milfd/bag_model.hpp"
#include "milfd/metrics.hpp"
#include "milfd/rng.hpp"
#include "milfd/synthetic.hpp"

namespace milfd {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;  // bags per Adam step
  double beta = 0.001;          // sparsity weight
  bool sparsity = true;         // false trains with plain BCE
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  double threshold = 0.75;
  // Std of Gaussian noise added to training features; 0 disables.
  double jitter = 0.0;
  std::size_t eval_threads = 1;

  void validate() const;
  double effective_beta() const { return sparsity ? beta : 0.0; }
};

nlohmann::json to_json(const TrainConfig& cfg);
void apply_json(const nlohmann::json& j, TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // Adam steps so far
  double mean_loss = 0.0;
  double val_auc = 0.0;
  double val_acc = 0.0;
  double val_map = 0.0;
  bool best = false;
  double seconds = 0.0;
};

nlohmann::json to_json(const EpochLog& log);

// Forward + backward for each bag, summing parameter gradients (no zeroing,
// no step). Returns the summed loss. A non-null jitter stream perturbs the
// features before the forward pass.
double accumulate_gradients(Model& model, std::span<const Bag* const> bags, double beta,
                            double jitter = 0.0, Rng* jitter_rng = nullptr);

struct TrainResult {
  Model best_model;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::size_t steps = 0;
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&, const Model&)>;

// Seeded per-epoch permutation of the training bags, one Adam step per
// batch (the last batch may be short). After each epoch the model is scored
// on val; the best val AUC wins, earlier epochs winning ties.
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train,
                        const Dataset& val, const EpochCallback& on_epoch = {});

// Same, starting from a given model.
TrainResult train_model(Model model, const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                        const EpochCallback& on_epoch = {});

}  // namespace milfd
