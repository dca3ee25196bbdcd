#include "milfd/adam.hpp"

#include <cmath>

#include "milfd/error.hpp"

namespace milfd {

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("adam lr must be positive");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
}

void Adam::step(ParameterSet& params) { step(params, {}); }

void Adam::step(ParameterSet& params, const std::function<double(const Parameter&)>& lr_scale) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  if (m_.size() != params.size()) {
    throw DimensionError("adam state holds " + std::to_string(m_.size()) +
                         " moments but parameter set has " + std::to_string(params.size()));
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  std::size_t k = 0;
  for (auto& p : params) {
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    ++k;
    if (!m.same_shape(p.value) || !p.grad.same_shape(p.value)) {
      throw DimensionError("adam state shape mismatch for parameter '" + p.name + "'");
    }
    const double lr = lr_scale ? cfg_.lr * lr_scale(p) : cfg_.lr;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace milfd
