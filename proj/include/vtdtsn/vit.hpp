#pragma once

#include <random>
#include <string>
#include <vector>

#include "vtdtsn/image.hpp"
#include "vtdtsn/ops.hpp"
#include "vtdtsn/param_store.hpp"

namespace vtdtsn {

struct ViTConfig {
  std::size_t patch = 8;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double dropout = 0.1;
  // Views are resized to this size before patchify.
  std::size_t view_height = 32;
  std::size_t view_width = 32;

  void validate() const;
  std::size_t tokens() const { return (view_height / patch) * (view_width / patch); }
};

// [N x P*P] rows of flattened P x P patches in row-major patch order.
Tensor patchify(const Image& image, std::size_t patch);
Image unpatchify(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch);

// patches * w_embed + pos
Var embed(Var patches, Var w_embed, Var pos);

struct BlockVars {
  Var norm1_gamma, norm1_beta;
  Var qkv_weight, qkv_bias;
  Var proj_weight, proj_bias;
  Var norm2_gamma, norm2_beta;
  Var fc1_weight, fc1_bias;
  Var fc2_weight, fc2_bias;
};

// Pre-norm encoder block: x + MHSA(LN(x)), then + MLP(LN(.)) with a gelu
// hidden layer. Dropout hits attention weights and the MLP output when
// `rng` is non-null. Attention matrices per head are appended to
// `attention_out` when given.
Var attention_block(Var x, const BlockVars& p, std::size_t heads, double dropout,
                    std::mt19937_64* rng, std::vector<Tensor>* attention_out = nullptr);

// One encoder branch; parameters live in a ParamStore under `prefix`.
class VitBranch {
 public:
  VitBranch() = default;
  VitBranch(ParamStore& store, std::string prefix, const ViTConfig& cfg, std::mt19937_64& init_rng);

  // Mean-pooled final-block tokens of a view already at the configured size: [1 x D].
  Var encode(Tape& tape, ParamStore& store, const Image& view, std::mt19937_64* rng) const;

  BlockVars bind_block(Tape& tape, ParamStore& store, std::size_t block) const;
  const std::string& prefix() const { return prefix_; }
  const ViTConfig& config() const { return cfg_; }

 private:
  struct BlockIndex {
    std::size_t norm1_gamma, norm1_beta, qkv_weight, qkv_bias, proj_weight, proj_bias;
    std::size_t norm2_gamma, norm2_beta, fc1_weight, fc1_bias, fc2_weight, fc2_bias;
  };

  std::string prefix_;
  ViTConfig cfg_;
  std::size_t patch_embed_ = 0;
  std::size_t pos_embed_ = 0;
  std::vector<BlockIndex> blocks_;
};

// Truncated (at 2 std) normal sample.
Tensor truncated_normal(Shape shape, double std, std::mt19937_64& rng);

}  // namespace vtdtsn
