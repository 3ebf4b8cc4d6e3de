#pragma once

#include <cstdint>
#include <vector>

namespace vtdtsn {

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;

  void validate() const;
};

// Replicate-level partition; every slice of a replicate lands in one list.
struct DatasetSplit {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> validation;
  std::vector<std::uint32_t> test;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

// Validation and test receive max(1, round(ratio * n)) replicates each and
// train keeps the remainder. Deterministic in (ids, seed); lists are sorted.
DatasetSplit split_replicates(std::vector<std::uint32_t> replicate_ids, const SplitRatios& ratios,
                              std::uint64_t seed);

}  // namespace vtdtsn
