#include "vtdtsn/views.hpp"

#include <algorithm>
#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

constexpr std::size_t kMinCropWidth = 16;

Image crop_columns(const Image& src, std::size_t offset, std::size_t width) {
  Image out(src.height, width);
  for (std::size_t r = 0; r < src.height; ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = src.at(r, offset + c);
  return out;
}

}  // namespace

ViewTriplet make_views(const Image& slice, double crop_fraction) {
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
    throw ConfigError("crop fraction must lie in (0, 1], got " + std::to_string(crop_fraction));
  }
  const std::size_t w = slice.width;
  const auto wc = static_cast<std::size_t>(std::llround(crop_fraction * static_cast<double>(w)));
  if (wc == 0 || (wc < kMinCropWidth && wc < w)) {
    throw ShapeError("slice width " + std::to_string(w) + " too narrow for crop fraction " +
                     std::to_string(crop_fraction) + " (crop width " + std::to_string(wc) + ")");
  }
  ViewTriplet v;
  v.crop_width = wc;
  v.crop_offsets = {0, static_cast<std::size_t>(std::llround(static_cast<double>(w - wc) / 2.0)), w - wc};
  v.left = crop_columns(slice, v.crop_offsets[0], wc);
  v.mid = crop_columns(slice, v.crop_offsets[1], wc);
  v.right = crop_columns(slice, v.crop_offsets[2], wc);
  return v;
}

Image reassemble_views(const ViewTriplet& views, std::size_t width) {
  const std::size_t h = views.left.height;
  Image out(h, width, 0.0);
  std::vector<std::size_t> seen(width, 0);
  const std::array<const Image*, 3> crops{&views.left, &views.mid, &views.right};
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t off = views.crop_offsets[k];
    for (std::size_t c = 0; c < views.crop_width && off + c < width; ++c) {
      const std::size_t col = off + c;
      const double n = static_cast<double>(++seen[col]);
      for (std::size_t r = 0; r < h; ++r) out.at(r, col) += (crops[k]->at(r, c) - out.at(r, col)) / n;
    }
  }
  for (std::size_t c = 0; c < width; ++c)
    if (seen[c] == 0) throw ShapeError("column " + std::to_string(c) + " not covered by any view");
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resize target must be non-empty");
  if (height == image.height && width == image.width) return image;
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  auto sample_axis = [](std::size_t i, double s, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    double p = (static_cast<double>(i) + 0.5) * s - 0.5;
    p = std::clamp(p, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(p));
    i1 = std::min(i0 + 1, n - 1);
    f = p - static_cast<double>(i0);
  };
  for (std::size_t r = 0; r < height; ++r) {
    std::size_t r0, r1;
    double fy;
    sample_axis(r, sy, image.height, r0, r1, fy);
    for (std::size_t c = 0; c < width; ++c) {
      std::size_t c0, c1;
      double fx;
      sample_axis(c, sx, image.width, c0, c1, fx);
      const double top = image.at(r0, c0) * (1.0 - fx) + image.at(r0, c1) * fx;
      const double bottom = image.at(r1, c0) * (1.0 - fx) + image.at(r1, c1) * fx;
      out.at(r, c) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

}  // namespace vtdtsn
