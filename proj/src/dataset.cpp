#include "vtdtsn/dataset.hpp"

#include <algorithm>
#include <map>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

TargetMode parse_target_mode(std::string_view s) {
  if (s == "identity") return TargetMode::identity;
  if (s == "next_timepoint") return TargetMode::next_timepoint;
  throw ConfigError("unknown target mode '" + std::string(s) + "'");
}

std::string_view target_mode_name(TargetMode m) {
  return m == TargetMode::identity ? "identity" : "next_timepoint";
}

std::vector<std::uint32_t> replicate_ids(const std::vector<Volume>& volumes) {
  std::vector<std::uint32_t> ids;
  for (const auto& v : volumes) ids.push_back(v.replicate_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<SliceSample> build_samples(const std::vector<Volume>& volumes,
                                       const std::vector<std::uint32_t>& replicates,
                                       const PreprocessOptions& preprocess, TargetMode mode) {
  std::map<std::pair<std::uint32_t, std::uint16_t>, const Volume*> by_key;
  for (const auto& v : volumes) by_key[{v.replicate_id, v.timepoint_days}] = &v;

  std::vector<SliceSample> out;
  for (auto it = by_key.begin(); it != by_key.end(); ++it) {
    const auto [rep, day] = it->first;
    if (std::find(replicates.begin(), replicates.end(), rep) == replicates.end()) continue;
    const Volume* src = it->second;
    const Volume* dst = src;
    if (mode == TargetMode::next_timepoint) {
      auto next = std::next(it);
      if (next == by_key.end() || next->first.first != rep) continue;
      dst = next->second;
      if (dst->depth != src->depth || dst->height != src->height || dst->width != src->width) {
        throw ShapeError("timepoints of replicate " + std::to_string(rep) + " differ in shape");
      }
    }
    for (std::size_t z = 0; z < src->depth; ++z) {
      SliceSample s;
      s.replicate_id = rep;
      s.timepoint_days = day;
      s.z = z;
      s.input = preprocess_slice(src->slice(z), preprocess);
      s.target = dst == src ? s.input : preprocess_slice(dst->slice(z), preprocess);
      out.push_back(std::move(s));
    }
  }
  return out;
}

SampleSets build_sample_sets(const std::vector<Volume>& volumes, const DatasetSplit& split,
                             const PreprocessOptions& preprocess, TargetMode mode) {
  return SampleSets{build_samples(volumes, split.train, preprocess, mode),
                    build_samples(volumes, split.validation, preprocess, mode),
                    build_samples(volumes, split.test, preprocess, mode)};
}

}  // namespace vtdtsn
