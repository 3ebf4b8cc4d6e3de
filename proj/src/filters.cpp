#include "vtdtsn/filters.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

}  // namespace

Image median_filter3(const Image& image) {
  if (image.height < 3 || image.width < 3) {
    throw ShapeError("median_filter3: image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " is smaller than the 3x3 kernel");
  }
  Image out(image.height, image.width);
  std::array<double, 9> window{};
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      std::size_t k = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
          window[k++] = image.at(clamp_index(static_cast<std::ptrdiff_t>(r) + dr, image.height),
                                 clamp_index(static_cast<std::ptrdiff_t>(c) + dc, image.width));
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out.at(r, c) = window[4];
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("gaussian sigma must be positive, got " + std::to_string(sigma));
  }
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

Image gaussian_filter(const Image& image, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  Image tmp(image.height, image.width);
  for (std::size_t r = 0; r < image.height; ++r)
    for (std::size_t c = 0; c < image.width; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] *
               image.at(r, clamp_index(static_cast<std::ptrdiff_t>(c) + i, image.width));
      tmp.at(r, c) = acc;
    }
  Image out(image.height, image.width);
  for (std::size_t r = 0; r < image.height; ++r)
    for (std::size_t c = 0; c < image.width; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] *
               tmp.at(clamp_index(static_cast<std::ptrdiff_t>(r) + i, image.height), c);
      out.at(r, c) = acc;
    }
  return out;
}

Image minmax_normalize(const Image& image) {
  if (image.pixels.empty()) throw ShapeError("minmax_normalize: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  const double lo = *lo_it, hi = *hi_it;
  Image out(image.height, image.width, 0.0);
  if (hi == lo) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < image.size(); ++i) out.pixels[i] = (image.pixels[i] - lo) / range;
  return out;
}

FilterOrder parse_filter_order(std::string_view s) {
  if (s == "median_first") return FilterOrder::median_first;
  if (s == "gaussian_first") return FilterOrder::gaussian_first;
  throw ConfigError("unknown filter order '" + std::string(s) + "'");
}

std::string_view filter_order_name(FilterOrder o) {
  return o == FilterOrder::median_first ? "median_first" : "gaussian_first";
}

Image preprocess_slice(const Image& raw, const PreprocessOptions& options) {
  Image img = raw;
  auto med = [&] {
    if (options.median) img = median_filter3(img);
  };
  auto gauss = [&] {
    if (options.gaussian) img = gaussian_filter(img, options.gaussian_sigma);
  };
  if (options.order == FilterOrder::median_first) {
    med();
    gauss();
  } else {
    gauss();
    med();
  }
  return options.normalize ? minmax_normalize(img) : img;
}

}  // namespace vtdtsn
