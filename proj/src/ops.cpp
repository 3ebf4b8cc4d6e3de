#include "vtdtsn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

double apply_activation(Activation kind, double x) {
  switch (kind) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::gelu:
      return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x)));
    case Activation::sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return x;
}

double activation_derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;  // subgradient at 0 is 0
    case Activation::gelu: {
      const double u = kSqrt2OverPi * (x + kGeluC * x * x * x);
      const double t = std::tanh(u);
      const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }
    case Activation::sigmoid: {
      const double s = apply_activation(Activation::sigmoid, x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

namespace ops {

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      gemm_nt(g.data().data(), b.value().data().data(), t.grad_buffer(a).data().data(), m, n, k);
    }
    if (t.requires_grad(b)) {
      gemm_tn(a.value().data().data(), g.data().data(), t.grad_buffer(b).data().data(), m, k, n);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank(av, 2, "transpose");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  return a.tape()->record(std::move(out), {a}, [a, m, n](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      auto& gv = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      const auto& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      const auto& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return a.tape()->record(std::move(out), {a}, [a, s](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_rank(av, 2, "add_bias");
  const std::size_t m = av.dim(0), n = av.dim(1);
  if (bv.size() != n) {
    throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not match rows of " +
                     shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bv[j];
  return a.tape()->record(std::move(out), {a, bias}, [a, bias, m, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bias)) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(i, j);
    }
  });
}

Var activation(Var a, Activation kind) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = apply_activation(kind, v);
  return a.tape()->record(std::move(out), {a}, [a, kind](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    const auto& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * activation_derivative(kind, x[i]);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "layer_norm");
  const std::size_t rows = xv.dim(0), d = xv.dim(1);
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw ShapeError("layer_norm: gamma/beta must have length " + std::to_string(d));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor xhat({rows, d});
  std::vector<double> inv_std(rows);
  Tensor out({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv.at(r, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv.at(r, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat.at(r, j) = (xv.at(r, j) - mu) * inv_std[r];
      out.at(r, j) = xhat.at(r, j) * gv[j] + bv[j];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](
          Tape& t, const Tensor& g) {
        const auto& gv = gamma.value();
        if (t.requires_grad(gamma) || t.requires_grad(beta)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              if (t.requires_grad(gamma)) t.grad_buffer(gamma)[j] += g.at(r, j) * xhat.at(r, j);
              if (t.requires_grad(beta)) t.grad_buffer(beta)[j] += g.at(r, j);
            }
          }
        }
        if (!t.requires_grad(x)) return;
        auto& gx = t.grad_buffer(x);
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = g.at(r, j) * gv[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat.at(r, j);
          }
          mean_d /= static_cast<double>(d);
          mean_dx /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            gx.at(r, j) += inv_std[r] * (dxhat[j] - mean_d - xhat.at(r, j) * mean_dx);
          }
        }
      });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "softmax_rows");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = softmax(xv.data().subspan(r * cols, cols));
    std::copy(row.begin(), row.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  Tensor y = out;
  return x.tape()->record(std::move(out), {x},
                          [x, y = std::move(y), rows, cols](Tape& t, const Tensor& g) {
                            auto& gx = t.grad_buffer(x);
                            for (std::size_t r = 0; r < rows; ++r) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < cols; ++j) dot += g.at(r, j) * y.at(r, j);
                              for (std::size_t j = 0; j < cols; ++j)
                                gx.at(r, j) += y.at(r, j) * (g.at(r, j) - dot);
                            }
                          });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_rank(av, 2, "slice_cols");
  if (begin >= end || end > av.dim(1)) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + shape_string(av.shape()));
  }
  const std::size_t rows = av.dim(0), w = end - begin;
  Tensor out({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) out.at(r, j) = av.at(r, begin + j);
  return a.tape()->record(std::move(out), {a}, [a, begin, rows, w](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) ga.at(r, begin + j) += g.at(r, j);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().value().dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().dim(0) != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                       " vs " + shape_string(p.shape()));
    }
    total += p.value().dim(1);
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < pv.dim(1); ++j) out.at(r, off + j) = pv.at(r, j);
    off += pv.dim(1);
  }
  return parts.front().tape()->record(std::move(out), parts, [parts, rows](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.value().dim(1);
      if (t.requires_grad(p)) {
        auto& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j) gp.at(r, j) += g.at(r, off + j);
      }
      off += w;
    }
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  require_rank(av, 2, "mean_rows");
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out({1, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[j] += av.at(r, j);
  const double inv = 1.0 / static_cast<double>(rows);
  for (auto& v : out.values()) v *= inv;
  return a.tape()->record(std::move(out), {a}, [a, rows, cols, inv](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols; ++j) ga.at(r, j) += g[j] * inv;
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (auto& v : ga.values()) v += g[0];
  });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var dropout(Var a, double rate, std::mt19937_64* rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0,1)");
  if (rate == 0.0 || rng == nullptr) return a;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.value().size());
  for (auto& m : mask) m = u(*rng) >= rate ? keep_scale : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return a.tape()->record(std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, const Tensor& g) {
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Var conv3x3(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 3, "conv3x3");
  require_rank(wv, 4, "conv3x3");
  const std::size_t cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2), cout = wv.dim(0);
  if (wv.dim(1) != cin || wv.dim(2) != 3 || wv.dim(3) != 3 || bv.size() != cout) {
    throw ShapeError("conv3x3: input " + shape_string(xv.shape()) + " incompatible with weight " +
                     shape_string(wv.shape()) + " and bias " + shape_string(bv.shape()));
  }
  Tensor out({cout, h, w});
  const double* xp = xv.data().data();
  const double* wp = wv.data().data();
  double* op = out.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    double* oplane = op + o * h * w;
    std::fill(oplane, oplane + h * w, bv[o]);
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xplane = xp + c * h * w;
      const double* k = wp + (o * cin + c) * 9;
      for (std::size_t ki = 0; ki < 3; ++ki) {
        for (std::size_t kj = 0; kj < 3; ++kj) {
          const double kv = k[ki * 3 + kj];
          const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - 1;
          const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - 1;
          const std::size_t i0 = di < 0 ? 1 : 0, i1 = di > 0 ? h - 1 : h;
          const std::size_t j0 = dj < 0 ? 1 : 0, j1 = dj > 0 ? w - 1 : w;
          for (std::size_t i = i0; i < i1; ++i) {
            const double* xrow = xplane + (i + di) * w;
            double* orow = oplane + i * w;
            for (std::size_t j = j0; j < j1; ++j) orow[j] += kv * xrow[j + dj];
          }
        }
      }
    }
  }
  return x.tape()->record(
      std::move(out), {x, weight, bias}, [x, weight, bias, cin, cout, h, w](Tape& t, const Tensor& g) {
        const double* gp = g.data().data();
        if (t.requires_grad(bias)) {
          auto& gb = t.grad_buffer(bias);
          for (std::size_t o = 0; o < cout; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < h * w; ++i) s += gp[o * h * w + i];
            gb[o] += s;
          }
        }
        const bool need_x = t.requires_grad(x), need_w = t.requires_grad(weight);
        if (!need_x && !need_w) return;
        const double* xp = x.value().data().data();
        const double* wp = weight.value().data().data();
        double* gxp = need_x ? t.grad_buffer(x).data().data() : nullptr;
        double* gwp = need_w ? t.grad_buffer(weight).data().data() : nullptr;
        for (std::size_t o = 0; o < cout; ++o) {
          const double* gplane = gp + o * h * w;
          for (std::size_t c = 0; c < cin; ++c) {
            const double* xplane = xp + c * h * w;
            const std::size_t kbase = (o * cin + c) * 9;
            for (std::size_t ki = 0; ki < 3; ++ki) {
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - 1;
                const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - 1;
                const std::size_t i0 = di < 0 ? 1 : 0, i1 = di > 0 ? h - 1 : h;
                const std::size_t j0 = dj < 0 ? 1 : 0, j1 = dj > 0 ? w - 1 : w;
                const double kv = wp[kbase + ki * 3 + kj];
                double acc = 0.0;
                for (std::size_t i = i0; i < i1; ++i) {
                  const double* grow = gplane + i * w;
                  const std::size_t xoff = (i + di) * w + dj;
                  for (std::size_t j = j0; j < j1; ++j) {
                    acc += grow[j] * xplane[xoff + j];
                    if (gxp) gxp[c * h * w + xoff + j] += grow[j] * kv;
                  }
                }
                if (gwp) gwp[kbase + ki * 3 + kj] += acc;
              }
            }
          }
        }
      });
}

Var pixel_shuffle(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  require_rank(xv, 3, "pixel_shuffle");
  if (r == 0 || xv.dim(0) % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels of " + shape_string(xv.shape()) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  const std::size_t c = xv.dim(0) / (r * r), h = xv.dim(1), w = xv.dim(2);
  const std::size_t oh = h * r, ow = w * r;
  // index map: output position -> input position
  std::vector<std::size_t> src(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t xx = 0; xx < w; ++xx)
          for (std::size_t j = 0; j < r; ++j)
            src[(ch * oh + y * r + i) * ow + xx * r + j] = ((ch * r * r + i * r + j) * h + y) * w + xx;
  Tensor out({c, oh, ow});
  for (std::size_t k = 0; k < src.size(); ++k) out[k] = xv[src[k]];
  return x.tape()->record(std::move(out), {x}, [x, src = std::move(src)](Tape& t, const Tensor& g) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t k = 0; k < src.size(); ++k) gx[src[k]] += g[k];
  });
}

}  // namespace ops
}  // namespace vtdtsn
