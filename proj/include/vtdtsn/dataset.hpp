#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "vtdtsn/filters.hpp"
#include "vtdtsn/split.hpp"
#include "vtdtsn/volume.hpp"

namespace vtdtsn {

// identity: reconstruct slice z at time t from itself.
// next_timepoint: predict slice z at the replicate's next timepoint.
enum class TargetMode { identity, next_timepoint };

TargetMode parse_target_mode(std::string_view s);
std::string_view target_mode_name(TargetMode m);

struct SliceSample {
  std::uint32_t replicate_id = 0;
  std::uint16_t timepoint_days = 0;
  std::size_t z = 0;
  Image input;
  Image target;
};

// Preprocessed samples of the listed replicates ordered by (replicate, timepoint, z).
std::vector<SliceSample> build_samples(const std::vector<Volume>& volumes,
                                       const std::vector<std::uint32_t>& replicates,
                                       const PreprocessOptions& preprocess, TargetMode mode);

std::vector<std::uint32_t> replicate_ids(const std::vector<Volume>& volumes);

struct SampleSets {
  std::vector<SliceSample> train;
  std::vector<SliceSample> validation;
  std::vector<SliceSample> test;
};

SampleSets build_sample_sets(const std::vector<Volume>& volumes, const DatasetSplit& split,
                             const PreprocessOptions& preprocess, TargetMode mode);

}  // namespace vtdtsn
