#include "vtdtsn/adam.hpp"

#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

void AdamOptions::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

AdamState AdamState::for_params(const ParamStore& params, AdamOptions options) {
  options.validate();
  AdamState s;
  s.options = options;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.value.shape(), 0.0);
    s.second_moment.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state) {
  const auto& o = state.options;
  o.validate();
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.grad.same_shape(p.value) || !state.first_moment[i].same_shape(p.value) ||
        !state.second_moment[i].same_shape(p.value)) {
      throw ShapeError("adam: shape mismatch for '" + p.name + "' " + shape_string(p.value.shape()) +
                       " vs grad " + shape_string(p.grad.shape()) + " / moment " +
                       shape_string(state.first_moment[i].shape()));
    }
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value[k] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
    }
  }
}

}  // namespace vtdtsn
