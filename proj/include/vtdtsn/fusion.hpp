#pragma once

#include <random>
#include <vector>

#include "vtdtsn/ops.hpp"
#include "vtdtsn/param_store.hpp"

namespace vtdtsn {

struct FusionConfig {
  std::size_t fused_hidden = 128;
  // Channels entering the first decoder stage; halves per stage.
  std::size_t decoder_channels = 32;
  std::size_t seed_height = 8;
  std::size_t seed_width = 8;
  Activation decoder_activation = Activation::gelu;
};

struct FusionVars {
  Var fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

// concat [1 x 3D] -> Linear -> ReLU -> Linear -> [1 x D]
Var fuse(Var f_left, Var f_mid, Var f_right, const FusionVars& p);

// Number of 2x pixel-shuffle stages that take the seed map to height x width.
// Throws ConfigError when no whole number of doublings reaches the target.
std::size_t decoder_stages(const FusionConfig& cfg, std::size_t height, std::size_t width);

// Input channel count of each stage followed by the output channel count (1).
std::vector<std::size_t> decoder_channel_schedule(const FusionConfig& cfg, std::size_t stages);

struct DecoderVars {
  Var seed_weight, seed_bias;
  std::vector<Var> conv_weight, conv_bias;
};

// Projects [1 x D] to a C x h0 x w0 seed map, then runs
// conv3x3 -> pixel_shuffle(2) -> activation per stage. The last stage uses
// a sigmoid. Returns [height x width].
Var reconstruct(Var fused, const DecoderVars& p, const FusionConfig& cfg, std::size_t height,
                std::size_t width);

// He-normal sample for a layer with the given fan-in.
Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace vtdtsn
