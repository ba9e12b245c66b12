#include "mtvrp/policy/params.hpp"

#include <stdexcept>

namespace mtvrp::policy {

void ParameterSet::add(const std::string& name, ad::Tensor value, bool frozen) {
  if (!params_.emplace(name, Parameter{std::move(value), frozen}).second) {
    throw std::invalid_argument("duplicate parameter " + name);
  }
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

void ParameterSet::freeze_all() {
  for (auto& [_, p] : params_) p.frozen = true;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.frozen ? 0 : 1;
  return n;
}

}  // namespace mtvrp::policy
