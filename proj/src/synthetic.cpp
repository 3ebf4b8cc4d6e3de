#include "vtdtsn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtdtsn/errors.hpp"
#include "vtdtsn/rng.hpp"

namespace vtdtsn {
namespace {

constexpr double kFadeSlices = 2.0;
constexpr double kLabelThreshold = 0.5;

double fade(const SyntheticCell& c, std::size_t z) {
  const double dz = static_cast<double>(z) - c.z_end;
  return dz <= 0.0 ? 1.0 : std::exp(-dz * dz / (2.0 * kFadeSlices * kFadeSlices));
}

double standard_normal(std::mt19937_64& rng) {
  // Box-Muller on the raw engine so volumes do not depend on the library's distributions.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Visits pixels within 4 sigma of the cell center.
template <typename Fn>
void for_cell_window(const GeneratorConfig& cfg, const SyntheticCell& c, Fn&& fn) {
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(4.0 * c.sigma));
  const auto r0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c.row) - reach);
  const auto r1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cfg.height) - 1, static_cast<std::ptrdiff_t>(c.row) + reach);
  const auto c0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c.col) - reach);
  const auto c1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(cfg.width) - 1, static_cast<std::ptrdiff_t>(c.col) + reach);
  for (auto r = r0; r <= r1; ++r)
    for (auto col = c0; col <= c1; ++col) {
      const double dr = static_cast<double>(r) - static_cast<double>(c.row);
      const double dc = static_cast<double>(col) - static_cast<double>(c.col);
      fn(static_cast<std::size_t>(r), static_cast<std::size_t>(col), std::exp(-(dr * dr + dc * dc) / (2.0 * c.sigma * c.sigma)));
    }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (replicates < 1) throw ConfigError("generator needs at least one replicate");
  if (timepoints.empty()) throw ConfigError("generator needs at least one timepoint");
  if (depth < 1 || height < 16 || width < 16) throw ConfigError("generator dims must satisfy Z>=1, H>=16, W>=16");
  if (!(cell_radius > 0.0) || !(attenuation_depth > 0.0)) {
    throw ConfigError("cell radius and attenuation depth must be positive");
  }
  if (noise < 0.0 || noise_growth < 0.0 || cell_growth < 0.0 || background < 0.0) {
    throw ConfigError("noise, noise growth, cell growth and background must be non-negative");
  }
}

std::vector<SyntheticCell> synthetic_cells(const GeneratorConfig& cfg, std::size_t timepoint_index,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 1));
  const auto n = static_cast<std::size_t>(std::llround(
      static_cast<double>(cfg.cells) * (1.0 + cfg.cell_growth * static_cast<double>(timepoint_index))));
  std::vector<SyntheticCell> cells(n);
  for (auto& c : cells) {
    c.row = uniform_index(rng, cfg.height);
    c.col = uniform_index(rng, cfg.width);
    c.sigma = cfg.cell_radius * (0.8 + 0.4 * uniform01(rng));
    c.cls = static_cast<std::uint8_t>(uniform_index(rng, 4));
    c.z_end = (0.3 + 0.7 * uniform01(rng)) * static_cast<double>(cfg.depth - 1);
  }
  return cells;
}

double noise_std_at(const GeneratorConfig& cfg, std::size_t z) {
  return cfg.noise * (1.0 + cfg.noise_growth * static_cast<double>(z));
}

Image synthetic_signal(const GeneratorConfig& cfg, const std::vector<SyntheticCell>& cells, std::size_t z) {
  Image img(cfg.height, cfg.width, cfg.background);
  for (const auto& c : cells) {
    const double amp = cfg.class_intensity[c.cls] * fade(c, z);
    for_cell_window(cfg, c, [&](std::size_t r, std::size_t col, double blob) { img.at(r, col) += amp * blob; });
  }
  const double att = std::exp(-static_cast<double>(z) / cfg.attenuation_depth);
  for (auto& v : img.pixels) v *= att;
  return img;
}

Volume generate_synthetic_stack(const GeneratorConfig& cfg, std::uint32_t replicate_id,
                                std::size_t timepoint_index, std::uint64_t seed) {
  cfg.validate();
  if (timepoint_index >= cfg.timepoints.size()) throw ConfigError("timepoint index out of range");
  const auto cells = synthetic_cells(cfg, timepoint_index, seed);
  std::mt19937_64 noise_rng(derive_seed(seed, 2));

  Volume v;
  v.replicate_id = replicate_id;
  v.timepoint_days = cfg.timepoints[timepoint_index];
  v.depth = cfg.depth;
  v.height = cfg.height;
  v.width = cfg.width;
  v.voxels.resize(cfg.depth * cfg.height * cfg.width);
  std::vector<std::uint8_t> labels(v.voxels.size(), 0);

  std::vector<double> best(cfg.height * cfg.width);
  for (std::size_t z = 0; z < cfg.depth; ++z) {
    const Image signal = synthetic_signal(cfg, cells, z);
    const double sd = noise_std_at(cfg, z);
    const std::size_t base = z * v.slice_size();
    for (std::size_t i = 0; i < v.slice_size(); ++i) {
      const double noise = sd > 0.0 ? sd * standard_normal(noise_rng) : 0.0;
      v.voxels[base + i] = static_cast<float>(signal.pixels[i] + noise);
    }
    // Label = class of the dominant cell where its faded profile exceeds the threshold.
    std::fill(best.begin(), best.end(), kLabelThreshold);
    for (const auto& c : cells) {
      const double f = fade(c, z);
      for_cell_window(cfg, c, [&](std::size_t r, std::size_t col, double blob) {
        const double p = blob * f;
        const std::size_t i = r * cfg.width + col;
        if (p >= best[i]) {
          best[i] = p;
          labels[base + i] = c.cls;
        }
      });
    }
  }
  v.labels = std::move(labels);
  return v;
}

std::vector<Volume> generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<Volume> out;
  for (std::uint32_t rep = 1; rep <= cfg.replicates; ++rep)
    for (std::size_t t = 0; t < cfg.timepoints.size(); ++t)
      out.push_back(generate_synthetic_stack(cfg, rep, t, derive_seed(seed, rep, t)));
  return out;
}

}  // namespace vtdtsn
