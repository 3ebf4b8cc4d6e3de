#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vtdtsn/compression.hpp"
#include "vtdtsn/config.hpp"
#include "vtdtsn/csv.hpp"

namespace vtdtsn {

// model.vtw plus a model.json sidecar with everything needed to rebuild the
// model and its evaluation data.
struct Checkpoint {
  ModelConfig model;
  PreprocessOptions preprocess;
  TargetMode target = TargetMode::identity;
  DatasetSplit split;
  std::uint64_t seed = 0;
  std::vector<WeightEntry> weights;
};

void save_checkpoint(const std::filesystem::path& dir, const VtDtsn& model, const AppConfig& cfg,
                     const DatasetSplit& split);
// `weights` overrides model.vtw; a .vtq path is dequantized.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& weights = {});
VtDtsn model_from_checkpoint(const Checkpoint& ck);

// Fields of `cfg` that disagree with the checkpoint, as config keys.
std::vector<std::string> checkpoint_mismatches(const Checkpoint& ck, const AppConfig& cfg);

std::vector<Volume> cmd_gen_data(const AppConfig& cfg, const std::filesystem::path& out, std::ostream& log);

TrainHistory cmd_train(const AppConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out,
                       bool resume, std::ostream& log);

struct EvalResult {
  CsvTable rows;
  CsvTable layers;
  CsvTable replicates;
  CsvTable histograms;
};

// Writes <out>, <out stem>_layers.csv, _replicates.csv and _hist.csv.
EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out, const EvalOptions& options,
                    const std::optional<AppConfig>& cfg, const std::optional<std::filesystem::path>& weights,
                    std::ostream& log);

CompressionReport cmd_compress(const std::filesystem::path& checkpoint, const CompressOptions& options,
                               const std::filesystem::path& out, const std::optional<std::filesystem::path>& data_dir,
                               std::ostream& log);

CsvTable cmd_report(const std::vector<std::filesystem::path>& eval_csvs, const std::filesystem::path& out,
                    std::ostream& log);

// Entry point of the vtdtsn executable. Exit codes: 0 success, 2 usage or
// configuration error, 3 numerical failure, 1 anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vtdtsn
