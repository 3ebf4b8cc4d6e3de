#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vtdtsn/param_store.hpp"
#include "vtdtsn/tensor.hpp"

namespace vtdtsn::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Overwrites every parameter with N(0, std^2) draws so no gradient is
// structurally zero, which keeps finite-difference checks meaningful.
inline void randomize_params(ParamStore& store, std::mt19937_64& rng, double std = 0.3) {
  std::normal_distribution<double> n(0.0, std);
  for (auto& p : store)
    for (auto& v : p.value.values()) v = n(rng);
}

}  // namespace vtdtsn::testing
