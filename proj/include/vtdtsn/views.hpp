#pragma once

#include <array>
#include <cstddef>

#include "vtdtsn/image.hpp"

namespace vtdtsn {

// Left/mid/right lateral crops of one slice, full height.
struct ViewTriplet {
  Image left;
  Image mid;
  Image right;
  std::array<std::size_t, 3> crop_offsets{};
  std::size_t crop_width = 0;
};

// Crops of width round(fraction * W) at column offsets 0, round((W - Wc) / 2)
// and W - Wc. Crops narrower than 16 columns are rejected unless they span
// the whole slice.
ViewTriplet make_views(const Image& slice, double crop_fraction = 0.70);

// Inverse of make_views for unmodified crops: each column is the running
// mean of the crops covering it. Throws if some column is uncovered.
Image reassemble_views(const ViewTriplet& views, std::size_t width);

// Bilinear resampling with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

}  // namespace vtdtsn
