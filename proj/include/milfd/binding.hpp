#pragma once

#include <string>
#include <string_view>
#include <unordered_map>

#include "milfd/parameter.hpp"
#include "milfd/tape.hpp"

namespace milfd {

// Resolves parameter names to tape leaves. A trainable binding routes
// gradients into the parameter set; a frozen one records constants and never
// mutates the set, so frozen bindings over a shared set are safe to use from
// several threads at once (each with its own tape).
class ParamBinding {
 public:
  ParamBinding(Tape& tape, ParameterSet& params) : tape_(tape), mutable_(&params), params_(params) {}
  ParamBinding(Tape& tape, const ParameterSet& params) : tape_(tape), params_(params) {}

  Var operator()(std::string_view name) {
    if (mutable_ != nullptr) return tape_.parameter(mutable_->at(name));
    std::string key(name);
    auto it = frozen_.find(key);
    if (it != frozen_.end()) return it->second;
    Var v = tape_.constant(params_.at(name).value);
    frozen_.emplace(std::move(key), v);
    return v;
  }

  Tape& tape() { return tape_; }
  bool trainable() const noexcept { return mutable_ != nullptr; }

 private:
  Tape& tape_;
  ParameterSet* mutable_ = nullptr;
  const ParameterSet& params_;
  std::unordered_map<std::string, Var> frozen_;
};

}  // namespace milfd
