#pragma once

#include <deque>
#include <string>
#include <string_view>

#include "milfd/matrix.hpp"

namespace milfd {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value; accumulated by Tape::backward
};

// Named, ordered collection of trainable matrices. Element addresses are
// stable for the lifetime of the set (deque storage), so tapes can hold
// pointers to parameters while a step is in flight.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix init);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  const Parameter* find(std::string_view name) const;

  void zero_grad();
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

}  // namespace milfd
