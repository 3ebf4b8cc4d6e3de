#include "vtdtsn/vit.hpp"

#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

void ViTConfig::validate() const {
  if (patch == 0 || embed_dim == 0 || depth == 0 || heads == 0 || mlp_ratio == 0) {
    throw ConfigError("ViT sizes must be positive");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " + std::to_string(heads));
  }
  if (view_height % patch != 0 || view_width % patch != 0 || view_height == 0 || view_width == 0) {
    throw ConfigError("view size " + std::to_string(view_height) + "x" + std::to_string(view_width) +
                      " not divisible by patch " + std::to_string(patch));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
}

Tensor patchify(const Image& image, std::size_t patch) {
  if (patch == 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ShapeError("patchify: " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t gh = image.height / patch, gw = image.width / patch;
  Tensor out({gh * gw, patch * patch});
  for (std::size_t pr = 0; pr < gh; ++pr)
    for (std::size_t pc = 0; pc < gw; ++pc)
      for (std::size_t i = 0; i < patch; ++i)
        for (std::size_t j = 0; j < patch; ++j)
          out.at(pr * gw + pc, i * patch + j) = image.at(pr * patch + i, pc * patch + j);
  return out;
}

Image unpatchify(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0 ||
      patches.shape() != Shape{(height / patch) * (width / patch), patch * patch}) {
    throw ShapeError("unpatchify: patches " + shape_string(patches.shape()) + " do not tile " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t gw = width / patch;
  Image out(height, width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      out.at(r, c) = patches.at((r / patch) * gw + c / patch, (r % patch) * patch + c % patch);
  return out;
}

Var embed(Var patches, Var w_embed, Var pos) {
  return ops::add(ops::matmul(patches, w_embed), pos);
}

Var attention_block(Var x, const BlockVars& p, std::size_t heads, double dropout,
                    std::mt19937_64* rng, std::vector<Tensor>* attention_out) {
  const std::size_t d = x.value().dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention_block: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (p.qkv_weight.value().shape() != Shape{d, 3 * d}) {
    throw ShapeError("attention_block: qkv weight " + shape_string(p.qkv_weight.shape()) +
                     " does not match token width " + std::to_string(d));
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Var h = ops::layer_norm(x, p.norm1_gamma, p.norm1_beta);
  Var qkv = ops::add_bias(ops::matmul(h, p.qkv_weight), p.qkv_bias);
  std::vector<Var> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t k = 0; k < heads; ++k) {
    Var q = ops::slice_cols(qkv, k * dh, (k + 1) * dh);
    Var key = ops::slice_cols(qkv, d + k * dh, d + (k + 1) * dh);
    Var v = ops::slice_cols(qkv, 2 * d + k * dh, 2 * d + (k + 1) * dh);
    Var attn = ops::softmax_rows(ops::scale(ops::matmul(q, ops::transpose(key)), scale));
    if (attention_out) attention_out->push_back(attn.value());
    attn = ops::dropout(attn, dropout, rng);
    head_outputs.push_back(ops::matmul(attn, v));
  }
  Var mixed = heads == 1 ? head_outputs.front() : ops::concat_cols(head_outputs);
  Var attn_out = ops::add_bias(ops::matmul(mixed, p.proj_weight), p.proj_bias);
  Var x1 = ops::add(x, attn_out);

  Var h2 = ops::layer_norm(x1, p.norm2_gamma, p.norm2_beta);
  Var hidden = ops::activation(ops::add_bias(ops::matmul(h2, p.fc1_weight), p.fc1_bias), Activation::gelu);
  Var mlp = ops::add_bias(ops::matmul(hidden, p.fc2_weight), p.fc2_bias);
  mlp = ops::dropout(mlp, dropout, rng);
  return ops::add(x1, mlp);
}

Tensor truncated_normal(Shape shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) {
    double s;
    do s = n(rng);
    while (std::abs(s) > 2.0);
    v = s * std;
  }
  return t;
}

VitBranch::VitBranch(ParamStore& store, std::string prefix, const ViTConfig& cfg, std::mt19937_64& rng)
    : prefix_(std::move(prefix)), cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg.embed_dim, pp = cfg.patch * cfg.patch, hidden = cfg.mlp_ratio * d;
  const double std = 0.02;
  auto name = [&](const std::string& s) { return prefix_ + "." + s; };
  patch_embed_ = store.add(name("patch_embed.weight"), truncated_normal({pp, d}, std, rng));
  {
    std::normal_distribution<double> n(0.0, std);
    Tensor pos({cfg.tokens(), d});
    for (auto& v : pos.values()) v = n(rng);
    pos_embed_ = store.add(name("pos_embed"), std::move(pos));
  }
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string blk = "block" + std::to_string(b) + ".";
    const bool last = b + 1 == cfg.depth;
    auto out_proj = [&](Shape s) { return last ? Tensor(std::move(s), 0.0) : truncated_normal(std::move(s), std, rng); };
    BlockIndex bi{};
    bi.norm1_gamma = store.add(name(blk + "norm1.gamma"), Tensor({d}, 1.0));
    bi.norm1_beta = store.add(name(blk + "norm1.beta"), Tensor({d}, 0.0));
    bi.qkv_weight = store.add(name(blk + "attn.qkv.weight"), truncated_normal({d, 3 * d}, std, rng));
    bi.qkv_bias = store.add(name(blk + "attn.qkv.bias"), Tensor({3 * d}, 0.0));
    bi.proj_weight = store.add(name(blk + "attn.proj.weight"), out_proj({d, d}));
    bi.proj_bias = store.add(name(blk + "attn.proj.bias"), Tensor({d}, 0.0));
    bi.norm2_gamma = store.add(name(blk + "norm2.gamma"), Tensor({d}, 1.0));
    bi.norm2_beta = store.add(name(blk + "norm2.beta"), Tensor({d}, 0.0));
    bi.fc1_weight = store.add(name(blk + "mlp.fc1.weight"), truncated_normal({d, hidden}, std, rng));
    bi.fc1_bias = store.add(name(blk + "mlp.fc1.bias"), Tensor({hidden}, 0.0));
    bi.fc2_weight = store.add(name(blk + "mlp.fc2.weight"), out_proj({hidden, d}));
    bi.fc2_bias = store.add(name(blk + "mlp.fc2.bias"), Tensor({d}, 0.0));
    blocks_.push_back(bi);
  }
}

BlockVars VitBranch::bind_block(Tape& tape, ParamStore& store, std::size_t block) const {
  const auto& b = blocks_.at(block);
  auto p = [&](std::size_t i) { return tape.param(store[i]); };
  return BlockVars{p(b.norm1_gamma), p(b.norm1_beta), p(b.qkv_weight), p(b.qkv_bias),
                   p(b.proj_weight), p(b.proj_bias), p(b.norm2_gamma), p(b.norm2_beta),
                   p(b.fc1_weight),  p(b.fc1_bias),  p(b.fc2_weight),  p(b.fc2_bias)};
}

Var VitBranch::encode(Tape& tape, ParamStore& store, const Image& view, std::mt19937_64* rng) const {
  if (view.height != cfg_.view_height || view.width != cfg_.view_width) {
    throw ShapeError(prefix_ + ": view " + std::to_string(view.height) + "x" + std::to_string(view.width) +
                     " does not match configured " + std::to_string(cfg_.view_height) + "x" +
                     std::to_string(cfg_.view_width));
  }
  Var x = embed(tape.constant(patchify(view, cfg_.patch)), tape.param(store[patch_embed_]),
                tape.param(store[pos_embed_]));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = attention_block(x, bind_block(tape, store, b), cfg_.heads, cfg_.dropout, rng);
  }
  return ops::mean_rows(x);
}

}  // namespace vtdtsn
