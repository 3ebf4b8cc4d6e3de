#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vtdtsn/volume.hpp"

namespace vtdtsn {

// Settings of the synthetic confocal stand-in. Intensities follow
//   S(x, y, z) = exp(-z / attenuation_depth) * (background + sum_cells I_class * blob * fade(z))
// plus zero-mean Gaussian noise of std noise * (1 + noise_growth * z).
struct GeneratorConfig {
  std::uint32_t replicates = 8;
  std::vector<std::uint16_t> timepoints{4, 8, 12};
  std::size_t depth = 18;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t cells = 12;        // at the first timepoint
  double cell_growth = 0.25;     // relative increase in cell count per later timepoint
  double cell_radius = 3.0;      // blob sigma in pixels
  double background = 0.05;
  double attenuation_depth = 12.0;
  double noise = 0.02;
  double noise_growth = 0.1;
  std::array<double, 4> class_intensity{0.25, 0.5, 0.75, 1.0};

  void validate() const;
};

struct SyntheticCell {
  std::size_t row = 0;
  std::size_t col = 0;
  double sigma = 1.0;
  std::uint8_t cls = 0;
  double z_end = 0.0;  // full brightness up to this depth, Gaussian fade after
};

std::vector<SyntheticCell> synthetic_cells(const GeneratorConfig& cfg, std::size_t timepoint_index,
                                           std::uint64_t seed);

double noise_std_at(const GeneratorConfig& cfg, std::size_t z);

// Noise-free intensity of slice z, before noise is added.
Image synthetic_signal(const GeneratorConfig& cfg, const std::vector<SyntheticCell>& cells, std::size_t z);

Volume generate_synthetic_stack(const GeneratorConfig& cfg, std::uint32_t replicate_id,
                                std::size_t timepoint_index, std::uint64_t seed);

// replicates x timepoints volumes, replicate ids 1..N, ordered by (replicate, timepoint).
std::vector<Volume> generate_dataset(const GeneratorConfig& cfg, std::uint64_t seed);

}  // namespace vtdtsn
