#pragma once

#include <cstdint>
#include <vector>

#include "vtdtsn/param_store.hpp"

namespace vtdtsn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  AdamOptions options;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step_count = 0;

  // Zero moments shaped like each parameter of `params`.
  static AdamState for_params(const ParamStore& params, AdamOptions options = {});
};

// One bias-corrected Adam update of every parameter from its `grad`.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace vtdtsn
