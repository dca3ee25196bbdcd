#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "milfd/matrix.hpp"
#include "milfd/parameter.hpp"

namespace milfd {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are bound to the parameter set's order
// on the first step and must keep matching shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {});

  // Applies one update from the gradients currently held in params.
  void step(ParameterSet& params);
  // Same, with the learning rate multiplied per parameter by lr_scale(p).
  void step(ParameterSet& params, const std::function<double(const Parameter&)>& lr_scale);

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace milfd
