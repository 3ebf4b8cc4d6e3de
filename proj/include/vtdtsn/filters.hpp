#pragma once

#include <string_view>
#include <vector>

#include "vtdtsn/image.hpp"

namespace vtdtsn {

// 3x3 median with edge replication. Requires H, W >= 3.
Image median_filter3(const Image& image);

// Normalized 1-D Gaussian taps of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur with edge replication.
Image gaussian_filter(const Image& image, double sigma = 1.0);

// (x - min) / (max - min); a constant image maps to zeros.
Image minmax_normalize(const Image& image);

enum class FilterOrder { median_first, gaussian_first };
FilterOrder parse_filter_order(std::string_view s);
std::string_view filter_order_name(FilterOrder o);

struct PreprocessOptions {
  bool median = true;
  bool gaussian = true;
  double gaussian_sigma = 1.0;
  FilterOrder order = FilterOrder::median_first;
  bool normalize = true;
};

// Denoising followed by per-slice min-max normalization.
Image preprocess_slice(const Image& raw, const PreprocessOptions& options = {});

}  // namespace vtdtsn
