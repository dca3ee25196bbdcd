#include "milfd/parameter.hpp"

#include <utility>

#include "milfd/error.hpp"

namespace milfd {

Parameter& ParameterSet::add(std::string name, Matrix init) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  Matrix grad(init.rows(), init.cols());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

const Parameter* ParameterSet::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return *p;
}

Parameter& ParameterSet::at(std::string_view name) {
  return const_cast<Parameter&>(std::as_const(*this).at(name));
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

}  // namespace milfd
