#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtdtsn/fusion.hpp"
#include "vtdtsn/image.hpp"
#include "vtdtsn/vit.hpp"
#include "vtdtsn/weight_archive.hpp"

namespace vtdtsn {

struct ModelConfig {
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  double crop_fraction = 0.70;
  ViTConfig vit;
  FusionConfig fusion;

  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
// Dotted names of the fields that differ, empty when equal.
std::vector<std::string> model_config_differences(const ModelConfig& a, const ModelConfig& b);

enum class Branch { left = 0, mid = 1, right = 2 };
inline constexpr std::array<const char*, 3> kBranchPrefixes{"vit_left", "vit_mid", "vit_right"};

struct ForwardOptions {
  // Dropout is active only when an rng is supplied.
  std::mt19937_64* rng = nullptr;
  // A disabled branch contributes a zero feature vector.
  std::array<bool, 3> branches{true, true, true};
};

// Three ViT branches over lateral views, an MLP fusion head and a
// pixel-shuffle decoder that reconstructs the full slice.
class VtDtsn {
 public:
  VtDtsn(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Left/mid/right crops resized to the configured view size.
  std::array<Image, 3> prepare_views(const Image& slice) const;

  // Concatenated branch features, [1 x 3D].
  Var features(Tape& tape, const Image& slice, const ForwardOptions& opts = {});
  Var fused(Tape& tape, const Image& slice, const ForwardOptions& opts = {});
  // Predicted slice, [H x W].
  Var forward(Tape& tape, const Image& slice, const ForwardOptions& opts = {});

  // Eval-mode prediction; safe to call concurrently.
  Image predict(const Image& slice, const ForwardOptions& opts = {}) const;
  // Eval-mode mean-pooled branch features, concatenated.
  std::vector<double> feature_vector(const Image& slice) const;

  std::size_t fusion_param_count() const;

  // Copies one branch from an archive whose names are `donor_prefix`
  // followed by the branch-relative names ("patch_embed.weight",
  // "block0.attn.qkv.weight", ...).
  void load_branch(const std::vector<WeightEntry>& donor, Branch branch, const std::string& donor_prefix);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::array<VitBranch, 3> branches_;
  std::size_t fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0;
  std::size_t seed_w_ = 0, seed_b_ = 0;
  std::vector<std::size_t> conv_w_, conv_b_;
};

Image image_from_tensor(const Tensor& t);
Tensor tensor_from_image(const Image& image);

}  // namespace vtdtsn
