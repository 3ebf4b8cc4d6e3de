#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vtdtsn/dataset.hpp"
#include "vtdtsn/model.hpp"
#include "vtdtsn/split.hpp"
#include "vtdtsn/synthetic.hpp"
#include "vtdtsn/training.hpp"

namespace vtdtsn {

enum class EvalSplit { train, validation, test, all };
EvalSplit parse_eval_split(std::string_view s);
std::string_view eval_split_name(EvalSplit s);

struct EvalOptions {
  EvalSplit split = EvalSplit::test;
  // Adds a cosine between encoder features of prediction and target.
  bool feature_cosine = false;
  // Adds a 7x7 sliding-window SSIM column next to the global one.
  bool windowed_ssim = false;
};

struct CompressOptions {
  double sparsity = 0.5;
  // Masked fine-tuning updates on the training split after pruning.
  std::size_t finetune_steps = 0;
};

// Everything one experiment needs. The master seed feeds the generator,
// the split, initialization and training through derived sub-seeds.
struct AppConfig {
  std::uint64_t seed = 20240501;
  GeneratorConfig gen;
  SplitRatios split;
  PreprocessOptions preprocess;
  TargetMode target = TargetMode::identity;
  // Image size is taken from the data at train time.
  ModelConfig model;
  TrainConfig train;
  std::size_t checkpoint_every = 1;
  EvalOptions eval;
  CompressOptions compress;

  std::uint64_t generator_seed() const;
  std::uint64_t split_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t train_seed() const;
};

// `key = value` lines; '#' starts a comment. Unknown or repeated keys and
// malformed values raise ConfigError with the line number.
AppConfig parse_config(std::string_view text);
AppConfig load_config(const std::filesystem::path& path);
// Every key with its current value, in a form parse_config accepts.
std::string config_to_text(const AppConfig& cfg);
std::vector<std::string> config_keys();

nlohmann::json preprocess_to_json(const PreprocessOptions& p);
PreprocessOptions preprocess_from_json(const nlohmann::json& j);

}  // namespace vtdtsn
