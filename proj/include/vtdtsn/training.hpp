#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "json.hpp"
#include "vtdtsn/adam.hpp"
#include "vtdtsn/dataset.hpp"
#include "vtdtsn/metrics.hpp"
#include "vtdtsn/model.hpp"

namespace vtdtsn {

struct TrainConfig {
  std::size_t micro_batch = 4;
  std::size_t accumulation_steps = 2;
  std::size_t max_epochs = 30;
  // Optimizer updates across all epochs; 0 means unlimited.
  std::size_t max_steps = 0;
  double learning_rate = 1e-3;
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.5;
  double lr_min = 1e-6;
  std::size_t early_stop_patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  LossWeights loss;
  SsimConstants ssim;

  void validate() const;
  std::size_t effective_batch() const { return micro_batch * accumulation_steps; }
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Learning-rate reduction when the monitored loss stops improving by more
// than min_delta for longer than `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double factor, double min_delta, double lr_min = 1e-6);

  // Feeds one epoch's validation loss and returns the learning rate to use next.
  double step(double val_loss);

  double lr() const { return lr_; }
  std::size_t counter() const { return counter_; }
  double best() const { return best_; }

  nlohmann::json state() const;
  void restore(const nlohmann::json& j);

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double min_delta_;
  double lr_min_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t counter_ = 0;
};

// Signals a stop once `patience` consecutive epochs fail to improve the best
// loss by more than min_delta.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_delta);

  // True when training should stop after this epoch.
  bool step(double val_loss);

  std::size_t counter() const { return counter_; }
  double best() const { return best_; }

  nlohmann::json state() const;
  void restore(const nlohmann::json& j);

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t counter_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
  std::size_t steps = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool early_stopped = false;

  nlohmann::json to_json() const;
  static TrainHistory from_json(const nlohmann::json& j);
};

// Composite loss of one sample; the prediction is recorded on `tape`.
Var sample_loss(Tape& tape, VtDtsn& model, const SliceSample& sample, const TrainConfig& cfg,
                std::mt19937_64* dropout_rng);

// Adds d(mean loss over every sample of every micro-batch)/d(params) into the
// parameter gradients, one sample at a time, and returns that mean loss.
// With equal micro-batch sizes this is the average of per-micro-batch mean
// gradients. Parameters are not modified.
double accumulate_step(VtDtsn& model, const std::vector<std::vector<const SliceSample*>>& micro_batches,
                       const TrainConfig& cfg, std::mt19937_64* dropout_rng);

// Mean composite loss in eval mode.
double evaluate_loss(const VtDtsn& model, const std::vector<SliceSample>& samples, const TrainConfig& cfg);

struct FitOptions {
  // Directory for periodic resumable state; empty disables checkpoints.
  std::filesystem::path checkpoint_dir;
  std::size_t checkpoint_every = 1;
  // Continue from the state in checkpoint_dir when one exists.
  bool resume = false;
  // Runs after each optimizer update, e.g. to re-apply a pruning mask.
  std::function<void(ParamStore&)> after_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains on `train`, monitors the composite loss on `validation` (or on the
// training set when it is empty), and leaves the model holding the
// parameters of the best validation epoch.
TrainHistory fit(VtDtsn& model, const std::vector<SliceSample>& train, const std::vector<SliceSample>& validation,
                 const TrainConfig& cfg, const FitOptions& options = {});

}  // namespace vtdtsn
