#include "vtdtsn/param_store.hpp"

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

std::size_t ParamStore::add(std::string name, Tensor init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Tensor grad(init.shape(), 0.0);
  params_.push_back(ParamTensor{std::move(name), std::move(init), std::move(grad)});
  return params_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamTensor& ParamStore::at(const std::string& name) {
  auto i = find(name);
  if (!i) throw LoadError("no parameter named '" + name + "'");
  return params_[*i];
}

const ParamTensor& ParamStore::at(const std::string& name) const {
  auto i = find(name);
  if (!i) throw LoadError("no parameter named '" + name + "'");
  return params_[*i];
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
    else p.grad.fill(0.0);
  }
}

void ParamStore::assign_values(const ParamStore& other) {
  if (other.size() != size()) throw ShapeError("parameter stores differ in size");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other[i].name || !params_[i].value.same_shape(other[i].value)) {
      throw ShapeError("parameter '" + params_[i].name + "' does not match '" + other[i].name + "'");
    }
    params_[i].value = other[i].value;
  }
}

bool is_prunable(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return !(ends_with(".bias") || ends_with(".gamma") || ends_with(".beta"));
}

}  // namespace vtdtsn
