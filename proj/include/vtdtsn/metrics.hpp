#pragma once

#include <span>
#include <vector>

#include "vtdtsn/image.hpp"
#include "vtdtsn/tape.hpp"

namespace vtdtsn {

// Weights of alpha * MSE + beta * (1 - SSIM) + gamma * (1 - cosine).
struct LossWeights {
  double alpha = 1.0;
  double beta = 0.5;
  double gamma = 0.5;

  void validate() const;
};

struct SsimConstants {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

double mse(std::span<const double> y, std::span<const double> yhat);

// Single-window SSIM over whole-array statistics, unbiased (n - 1) variances.
double ssim(std::span<const double> y, std::span<const double> yhat, const SsimConstants& c = {});

// Mean SSIM over every window x window patch fully inside the images.
double ssim_windowed(const Image& y, const Image& yhat, std::size_t window = 7,
                     const SsimConstants& c = {});

// Cosine of the angle between the flattened arrays; zero norm is an error.
double cosine_similarity(std::span<const double> y, std::span<const double> yhat);

double composite_loss(std::span<const double> y, std::span<const double> yhat, const LossWeights& w,
                      const SsimConstants& c = {});

// d composite_loss / d yhat.
std::vector<double> composite_loss_gradient(std::span<const double> y, std::span<const double> yhat,
                                            const LossWeights& w, const SsimConstants& c = {});

// Records the composite loss of `prediction` against a fixed target.
Var composite_loss(Var prediction, const Tensor& target, const LossWeights& w,
                   const SsimConstants& c = {});

}  // namespace vtdtsn
