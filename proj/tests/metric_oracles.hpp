#pragma once

// Brute-force reference implementations of the image metrics, written
// directly from their textbook definitions in extended precision and
// sharing no code with the library.

#include <cmath>
#include <vector>

namespace vtdtsn::oracle {

inline double mse(const std::vector<double>& y, const std::vector<double>& yhat) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (long double)(y[i] - yhat[i]) * (y[i] - yhat[i]);
  return static_cast<double>(s / y.size());
}

inline double ssim(const std::vector<double>& x, const std::vector<double>& y, double k1 = 0.01,
                   double k2 = 0.03, double range = 1.0) {
  const long double n = x.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const long double vx = sxx / (n - 1), vy = syy / (n - 1), cxy = sxy / (n - 1);
  const long double c1 = (k1 * range) * (k1 * range), c2 = (k2 * range) * (k2 * range);
  return static_cast<double>(((2 * mx * my + c1) * (2 * cxy + c2)) /
                             ((mx * mx + my * my + c1) * (vx + vy + c2)));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += (long double)a[i] * b[i];
    na += (long double)a[i] * a[i];
    nb += (long double)b[i] * b[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

}  // namespace vtdtsn::oracle
