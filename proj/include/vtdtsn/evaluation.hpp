#pragma once

#include <cstdint>
#include <vector>

#include "vtdtsn/dataset.hpp"
#include "vtdtsn/metrics.hpp"
#include "vtdtsn/model.hpp"

namespace vtdtsn {

struct SliceMetrics {
  std::uint32_t replicate_id = 0;
  std::uint16_t timepoint_days = 0;
  std::size_t z = 0;
  double mse = 0.0;
  double ssim = 0.0;
  // NaN when the target or prediction has zero norm.
  double cosine = 0.0;
};

// Metrics of every sample in input order. Work is split over `threads`
// workers; each result lands in its own slot, so output does not depend on
// the thread count. threads == 0 reads VTDTSN_THREADS (default 1).
std::vector<SliceMetrics> evaluate_slices(const VtDtsn& model, const std::vector<SliceSample>& samples,
                                          std::size_t threads = 0, const SsimConstants& c = {});

struct MetricMeans {
  double mse = 0.0;
  double ssim = 0.0;
  double cosine = 0.0;
  std::size_t count = 0;
};

// Means over rows; NaN cosines are skipped.
MetricMeans mean_metrics(const std::vector<SliceMetrics>& rows);

std::size_t default_thread_count();

}  // namespace vtdtsn
