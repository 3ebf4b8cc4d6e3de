#include "vtdtsn/split.hpp"

#include <algorithm>
#include <cmath>

#include "vtdtsn/errors.hpp"
#include "vtdtsn/rng.hpp"

namespace vtdtsn {

void SplitRatios::validate() const {
  if (train < 0 || validation < 0 || test < 0 || std::abs(train + validation + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
}

DatasetSplit split_replicates(std::vector<std::uint32_t> ids, const SplitRatios& ratios,
                              std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ConfigError("replicate ids must be unique");
  }
  const std::size_t n = ids.size();
  if (n < 3) throw ConfigError("splitting needs at least 3 replicates, got " + std::to_string(n));
  ratios.validate();

  auto count = [n](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(n))));
  };
  const std::size_t n_val = count(ratios.validation);
  const std::size_t n_test = count(ratios.test);
  if (n_val + n_test >= n) {
    throw ConfigError("split ratios leave no replicates for training with n = " + std::to_string(n));
  }

  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(ids[i], ids[uniform_index(rng, i + 1)]);

  DatasetSplit s;
  s.validation.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val),
                ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
  for (auto* v : {&s.train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

}  // namespace vtdtsn
