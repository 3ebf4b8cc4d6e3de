#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vtdtsn/tape.hpp"

namespace vtdtsn {

// Ordered collection of uniquely named parameters. Copying a store copies
// all values, which is how snapshots (best epoch, pruned/quantized variants)
// are taken.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor init);

  ParamTensor& operator[](std::size_t i) { return params_[i]; }
  const ParamTensor& operator[](std::size_t i) const { return params_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  ParamTensor& at(const std::string& name);
  const ParamTensor& at(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  // Copies values only; names and shapes must agree.
  void assign_values(const ParamStore& other);

 private:
  std::vector<ParamTensor> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Weights are prunable; biases and normalization parameters are not.
bool is_prunable(const std::string& param_name);

}  // namespace vtdtsn
