#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtvrp/autodiff/tensor.hpp"

namespace mtvrp::policy {

struct Parameter {
  ad::Tensor value;
  bool frozen = false;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Named parameter tensors, iterated in name order.
class ParameterSet {
 public:
  void add(const std::string& name, ad::Tensor value, bool frozen);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);

  void freeze_all();
  std::size_t size() const { return params_.size(); }
  std::size_t trainable_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::map<std::string, Parameter> params_;
};

}  // namespace mtvrp::policy
