#include "vtdtsn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

void require_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) {
    throw ShapeError(std::string(what) + ": size mismatch " + std::to_string(y.size()) + " vs " +
                     std::to_string(yhat.size()));
  }
  if (y.empty()) throw ShapeError(std::string(what) + ": empty input");
}

struct PairStats {
  double mu_x, mu_y, var_x, var_y, cov;
};

PairStats pair_stats(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  PairStats s{sx / n, sy / n, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - s.mu_x, dy = y[i] - s.mu_y;
    s.var_x += dx * dx;
    s.var_y += dy * dy;
    s.cov += dx * dy;
  }
  s.var_x /= n - 1.0;
  s.var_y /= n - 1.0;
  s.cov /= n - 1.0;
  return s;
}

double ssim_from(const PairStats& s, const SsimConstants& c) {
  const double num = (2.0 * s.mu_x * s.mu_y + c.c1()) * (2.0 * s.cov + c.c2());
  const double den = (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c.c1()) * (s.var_x + s.var_y + c.c2());
  return num / den;
}

double norm_sq(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma < 0 || !(alpha > 0 || beta > 0 || gamma > 0)) {
    throw ConfigError("loss weights must be non-negative with at least one positive");
  }
}

double mse(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    s += d * d;
  }
  return s / static_cast<double>(y.size());
}

double ssim(std::span<const double> y, std::span<const double> yhat, const SsimConstants& c) {
  require_pair(y, yhat, "ssim");
  if (y.size() < 2) throw DegenerateInputError("ssim needs at least 2 elements");
  return ssim_from(pair_stats(y, yhat), c);
}

double ssim_windowed(const Image& y, const Image& yhat, std::size_t window, const SsimConstants& c) {
  if (y.height != yhat.height || y.width != yhat.width) throw ShapeError("ssim_windowed: image shapes differ");
  if (window < 2 || y.height < window || y.width < window) {
    throw DegenerateInputError("ssim_windowed: images smaller than the window");
  }
  std::vector<double> a(window * window), b(window * window);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + window <= y.height; ++r) {
    for (std::size_t col = 0; col + window <= y.width; ++col) {
      for (std::size_t i = 0; i < window; ++i)
        for (std::size_t j = 0; j < window; ++j) {
          a[i * window + j] = y.at(r + i, col + j);
          b[i * window + j] = yhat.at(r + i, col + j);
        }
      total += ssim_from(pair_stats(a, b), c);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double cosine_similarity(std::span<const double> y, std::span<const double> yhat) {
  require_pair(y, yhat, "cosine");
  const double na = norm_sq(y), nb = norm_sq(yhat);
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero-norm vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * yhat[i];
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double composite_loss(std::span<const double> y, std::span<const double> yhat, const LossWeights& w,
                      const SsimConstants& c) {
  w.validate();
  require_pair(y, yhat, "composite_loss");
  double loss = 0.0;
  if (w.alpha > 0) loss += w.alpha * mse(y, yhat);
  if (w.beta > 0) loss += w.beta * (1.0 - ssim(y, yhat, c));
  if (w.gamma > 0) loss += w.gamma * (1.0 - cosine_similarity(y, yhat));
  return loss;
}

std::vector<double> composite_loss_gradient(std::span<const double> y, std::span<const double> yhat,
                                            const LossWeights& w, const SsimConstants& c) {
  w.validate();
  require_pair(y, yhat, "composite_loss");
  const std::size_t n = y.size();
  const double nd = static_cast<double>(n);
  std::vector<double> g(n, 0.0);
  if (w.alpha > 0) {
    for (std::size_t i = 0; i < n; ++i) g[i] += w.alpha * 2.0 * (yhat[i] - y[i]) / nd;
  }
  if (w.beta > 0) {
    if (n < 2) throw DegenerateInputError("ssim needs at least 2 elements");
    const auto s = pair_stats(y, yhat);  // x = target, y = prediction
    const double a = 2.0 * s.mu_x * s.mu_y + c.c1();
    const double b = 2.0 * s.cov + c.c2();
    const double cc = s.mu_x * s.mu_x + s.mu_y * s.mu_y + c.c1();
    const double d = s.var_x + s.var_y + c.c2();
    const double value = a * b / (cc * d);
    for (std::size_t i = 0; i < n; ++i) {
      const double ds = value * ((2.0 * s.mu_x / nd) / a + (2.0 * (y[i] - s.mu_x) / (nd - 1.0)) / b -
                                 (2.0 * s.mu_y / nd) / cc - (2.0 * (yhat[i] - s.mu_y) / (nd - 1.0)) / d);
      g[i] -= w.beta * ds;
    }
  }
  if (w.gamma > 0) {
    const double na = norm_sq(y), nb = norm_sq(yhat);
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero-norm vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += y[i] * yhat[i];
    const double inv = 1.0 / std::sqrt(na * nb);
    const double cos = dot * inv;
    for (std::size_t i = 0; i < n; ++i) g[i] -= w.gamma * (y[i] * inv - cos * yhat[i] / nb);
  }
  return g;
}

Var composite_loss(Var prediction, const Tensor& target, const LossWeights& w, const SsimConstants& c) {
  const Tensor& p = prediction.value();
  if (p.size() != target.size()) {
    throw ShapeError("composite_loss: prediction " + shape_string(p.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const double value = composite_loss(target.data(), p.data(), w, c);
  return prediction.tape()->record(Tensor::scalar(value), {prediction},
                                   [prediction, target, w, c](Tape& t, const Tensor& g) {
                                     auto grad = composite_loss_gradient(target.data(), prediction.value().data(), w, c);
                                     auto& gp = t.grad_buffer(prediction);
                                     for (std::size_t i = 0; i < grad.size(); ++i) gp[i] += g[0] * grad[i];
                                   });
}

}  // namespace vtdtsn
