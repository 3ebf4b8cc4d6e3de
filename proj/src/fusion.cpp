#include "vtdtsn/fusion.hpp"

#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

Var fuse(Var f_left, Var f_mid, Var f_right, const FusionVars& p) {
  const Shape& s = f_left.shape();
  if (s.size() != 2 || s[0] != 1 || f_mid.shape() != s || f_right.shape() != s) {
    throw ShapeError("fuse: branch features " + shape_string(f_left.shape()) + ", " +
                     shape_string(f_mid.shape()) + ", " + shape_string(f_right.shape()) +
                     " must be equal [1 x D] rows");
  }
  Var cat = ops::concat_cols({f_left, f_mid, f_right});
  Var hidden = ops::activation(ops::add_bias(ops::matmul(cat, p.fc1_weight), p.fc1_bias), Activation::relu);
  return ops::add_bias(ops::matmul(hidden, p.fc2_weight), p.fc2_bias);
}

std::size_t decoder_stages(const FusionConfig& cfg, std::size_t height, std::size_t width) {
  auto fail = [&] {
    return ConfigError("decoder cannot reach " + std::to_string(height) + "x" + std::to_string(width) +
                       " from a " + std::to_string(cfg.seed_height) + "x" + std::to_string(cfg.seed_width) +
                       " seed by doubling");
  };
  if (cfg.seed_height == 0 || cfg.seed_width == 0 || height % cfg.seed_height != 0 ||
      width % cfg.seed_width != 0) {
    throw fail();
  }
  const std::size_t fh = height / cfg.seed_height, fw = width / cfg.seed_width;
  if (fh != fw || fh < 2 || (fh & (fh - 1)) != 0) throw fail();
  std::size_t stages = 0;
  for (std::size_t f = fh; f > 1; f >>= 1) ++stages;
  return stages;
}

std::vector<std::size_t> decoder_channel_schedule(const FusionConfig& cfg, std::size_t stages) {
  if (cfg.decoder_channels == 0) throw ConfigError("decoder_channels must be positive");
  std::vector<std::size_t> ch;
  for (std::size_t i = 0; i < stages; ++i) ch.push_back(std::max<std::size_t>(1, cfg.decoder_channels >> i));
  ch.push_back(1);
  return ch;
}

Var reconstruct(Var fused, const DecoderVars& p, const FusionConfig& cfg, std::size_t height,
                std::size_t width) {
  const std::size_t stages = decoder_stages(cfg, height, width);
  if (p.conv_weight.size() != stages || p.conv_bias.size() != stages) {
    throw ShapeError("reconstruct: decoder has " + std::to_string(p.conv_weight.size()) + " stages, need " +
                     std::to_string(stages));
  }
  const auto ch = decoder_channel_schedule(cfg, stages);
  Var seed = ops::add_bias(ops::matmul(fused, p.seed_weight), p.seed_bias);
  Var x = ops::reshape(seed, {ch[0], cfg.seed_height, cfg.seed_width});
  for (std::size_t s = 0; s < stages; ++s) {
    x = ops::pixel_shuffle(ops::conv3x3(x, p.conv_weight[s], p.conv_bias[s]), 2);
    x = ops::activation(x, s + 1 == stages ? Activation::sigmoid : cfg.decoder_activation);
  }
  return ops::reshape(x, {height, width});
}

Tensor he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

}  // namespace vtdtsn
