#pragma once

#include <random>
#include <string_view>
#include <vector>

#include "vtdtsn/tape.hpp"

namespace vtdtsn {

enum class Activation { relu, gelu, sigmoid };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

// Scalar forms, shared by the recorded ops and by tests.
double apply_activation(Activation kind, double x);
double activation_derivative(Activation kind, double x);

// Numerically stable softmax of one vector.
std::vector<double> softmax(std::span<const double> x);

namespace ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Adds a length-n bias to every row of an [m x n] matrix.
Var add_bias(Var a, Var bias);
Var activation(Var a, Activation kind);
// Row-wise layer normalization over the last dimension of an [N x D] matrix.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_rows(Var x);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var mean_rows(Var a);
Var reshape(Var a, Shape shape);
Var sum(Var a);
Var mean(Var a);
// Inverted dropout. Identity when rate == 0 or rng is null.
Var dropout(Var a, double rate, std::mt19937_64* rng);

// 3x3 convolution, stride 1, zero padding 1.
// x: [C x H x W], weight: [Co x C x 3 x 3], bias: [Co] -> [Co x H x W].
Var conv3x3(Var x, Var weight, Var bias);
// [C*r*r x H x W] -> [C x H*r x W*r]; out(c, h*r+i, w*r+j) = in(c*r*r + i*r + j, h, w).
Var pixel_shuffle(Var x, std::size_t r);

}  // namespace ops
}  // namespace vtdtsn
