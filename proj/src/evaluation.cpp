#include "vtdtsn/evaluation.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

std::size_t default_thread_count() {
  const char* env = std::getenv("VTDTSN_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const long n = std::stol(env);
    if (n >= 1) return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string("VTDTSN_THREADS must be a positive integer, got '") + env + "'");
}

std::vector<SliceMetrics> evaluate_slices(const VtDtsn& model, const std::vector<SliceSample>& samples,
                                          std::size_t threads, const SsimConstants& c) {
  if (threads == 0) threads = default_thread_count();
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  std::vector<SliceMetrics> out(samples.size());

  auto one = [&](std::size_t i) {
    const SliceSample& s = samples[i];
    const Image pred = model.predict(s.input);
    SliceMetrics m;
    m.replicate_id = s.replicate_id;
    m.timepoint_days = s.timepoint_days;
    m.z = s.z;
    m.mse = mse(s.target.pixels, pred.pixels);
    m.ssim = ssim(s.target.pixels, pred.pixels, c);
    try {
      m.cosine = cosine_similarity(s.target.pixels, pred.pixels);
    } catch (const DegenerateInputError&) {
      m.cosine = std::numeric_limits<double>::quiet_NaN();
    }
    out[i] = m;
  };

  if (threads == 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) one(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < samples.size(); i += threads) one(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

MetricMeans mean_metrics(const std::vector<SliceMetrics>& rows) {
  MetricMeans m;
  std::size_t cos_n = 0;
  for (const auto& r : rows) {
    m.mse += r.mse;
    m.ssim += r.ssim;
    if (!std::isnan(r.cosine)) {
      m.cosine += r.cosine;
      ++cos_n;
    }
  }
  m.count = rows.size();
  if (!rows.empty()) {
    m.mse /= static_cast<double>(rows.size());
    m.ssim /= static_cast<double>(rows.size());
  }
  m.cosine = cos_n ? m.cosine / static_cast<double>(cos_n) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

}  // namespace vtdtsn
