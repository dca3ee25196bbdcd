#pragma once

// Central finite-difference oracle. Evaluates a scalar function of a list of
// input matrices through fresh tapes and compares the reverse-mode gradient
// against (f(x + h) - f(x - h)) / 2h for every coordinate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "milfd/matrix.hpp"
#include "milfd/rng.hpp"
#include "milfd/tape.hpp"

namespace milfd::testing {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double evaluate(const ScalarFn& fn, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.constant(m));
  return fn(tape, vars).scalar();
}

inline std::vector<Matrix> analytic_gradients(const ScalarFn& fn,
                                              const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.input(m));
  Var loss = fn(tape, vars);
  tape.backward(loss);
  std::vector<Matrix> grads;
  for (const Var& v : vars) grads.push_back(tape.grad(v));
  return grads;
}

inline std::vector<Matrix> numeric_gradients(const ScalarFn& fn, std::vector<Matrix> inputs,
                                             double h = 1e-5) {
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix g(inputs[k].rows(), inputs[k].cols());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double fp = evaluate(fn, inputs);
      inputs[k][i] = orig - h;
      const double fm = evaluate(fn, inputs);
      inputs[k][i] = orig;
      g[i] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// ||a - n|| / max(||a||, ||n||) over all inputs jointly.
inline double relative_error(const std::vector<Matrix>& a, const std::vector<Matrix>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      diff += (a[k][i] - n[k][i]) * (a[k][i] - n[k][i]);
      na += a[k][i] * a[k][i];
      nn += n[k][i] * n[k][i];
    }
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

inline double gradient_check(const ScalarFn& fn, const std::vector<Matrix>& inputs,
                             double h = 1e-5) {
  return relative_error(analytic_gradients(fn, inputs), numeric_gradients(fn, inputs, h));
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.normal(0.0, scale);
  return m;
}

}  // namespace milfd::testing

#include "milfd/binding.hpp"
#include "milfd/parameter.hpp"

namespace milfd::testing {

using ParamFn = std::function<Var(ParamBinding&)>;

// Compares reverse-mode parameter gradients against central differences over
// every scalar in the set. Returns the joint relative error.
inline double param_gradient_check(ParameterSet& params, const ParamFn& fn, double h = 1e-5) {
  params.zero_grad();
  {
    Tape tape;
    ParamBinding bind(tape, params);
    Var loss = fn(bind);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    ParamBinding bind(tape, std::as_const(params));
    return fn(bind).scalar();
  };
  std::vector<Matrix> analytic, numeric;
  for (auto& p : params) {
    analytic.push_back(p.grad);
    Matrix g(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double fp = eval();
      p.value[i] = orig - h;
      const double fm = eval();
      p.value[i] = orig;
      g[i] = (fp - fm) / (2.0 * h);
    }
    numeric.push_back(std::move(g));
  }
  return relative_error(analytic, numeric);
}

// Randomizes every parameter (norm scales around 1) so probes do not depend
// on the initializer.
inline void randomize(ParameterSet& params, Rng& rng, double scale = 0.5) {
  for (auto& p : params) {
    const bool is_scale = p.name.size() >= 6 && p.name.ends_with(".scale");
    for (auto& v : p.value.data()) v = is_scale ? 1.0 + rng.normal(0.0, 0.2) : rng.normal(0.0, scale);
  }
}

}  // namespace milfd::testing
