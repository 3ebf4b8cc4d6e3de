#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "vtdtsn/param_store.hpp"

namespace vtdtsn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;  // empty for single-input checks
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  // Coordinates whose larger magnitude reached the floor, i.e. that were
  // judged by relative rather than absolute error.
  std::size_t resolved = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// derivative is zero from reporting cancellation noise as relative error.
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Compares the reverse-mode gradient of f at `point` with central differences
// (f(x+eps) - f(x-eps)) / (2 eps), one coordinate at a time. `floor` should
// sit above the rounding noise of the difference quotient, roughly
// ulp(f) / eps, so that structurally zero derivatives do not register as
// large relative errors.
GradCheckResult grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point,
                           double eps = 1e-6, double floor = 1e-8);

// Same check over every element of every parameter in `params`; `loss`
// records the scalar objective on a fresh tape.
GradCheckResult grad_check_params(ParamStore& params, const std::function<Var(Tape&)>& loss,
                                  double eps = 1e-6, double floor = 1e-8);

}  // namespace vtdtsn
