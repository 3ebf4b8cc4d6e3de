#include "vtdtsn/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/errors.hpp"
#include "vtdtsn/rng.hpp"
#include "vtdtsn/weight_archive.hpp"

namespace vtdtsn {

void TrainConfig::validate() const {
  if (micro_batch == 0) throw ConfigError("micro_batch must be positive");
  if (accumulation_steps == 0) throw ConfigError("accumulation_steps must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau_factor must lie in (0,1)");
  if (!(lr_min >= 0.0)) throw ConfigError("lr_min must be non-negative");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be non-negative");
  loss.validate();
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"micro_batch", c.micro_batch},
          {"accumulation_steps", c.accumulation_steps},
          {"max_epochs", c.max_epochs},
          {"max_steps", c.max_steps},
          {"learning_rate", c.learning_rate},
          {"plateau_patience", c.plateau_patience},
          {"plateau_factor", c.plateau_factor},
          {"lr_min", c.lr_min},
          {"early_stop_patience", c.early_stop_patience},
          {"min_delta", c.min_delta},
          {"seed", c.seed},
          {"loss", {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"gamma", c.loss.gamma}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.micro_batch = j.at("micro_batch").get<std::size_t>();
    c.accumulation_steps = j.at("accumulation_steps").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.max_steps = j.at("max_steps").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.plateau_patience = j.at("plateau_patience").get<std::size_t>();
    c.plateau_factor = j.at("plateau_factor").get<double>();
    c.lr_min = j.at("lr_min").get<double>();
    c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
    c.min_delta = j.at("min_delta").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.loss.alpha = j.at("loss").at("alpha").get<double>();
    c.loss.beta = j.at("loss").at("beta").get<double>();
    c.loss.gamma = j.at("loss").at("gamma").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

namespace {

// JSON has no infinity; an unset best is stored as null.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double from_nullable(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor, double min_delta, double lr_min)
    : lr_(lr), patience_(patience), factor_(factor), min_delta_(min_delta), lr_min_(lr_min) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0,1)");
  if (lr < lr_min) lr_ = lr_min;
}

double PlateauScheduler::step(double val_loss) {
  require_finite(val_loss, "validation loss given to the plateau scheduler");
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    counter_ = 0;
  } else if (++counter_ > patience_) {
    lr_ = std::max(lr_ * factor_, lr_min_);
    counter_ = 0;
  }
  return lr_;
}

nlohmann::json PlateauScheduler::state() const {
  return {{"lr", lr_}, {"best", finite_or_null(best_)}, {"counter", counter_}};
}

void PlateauScheduler::restore(const nlohmann::json& j) {
  lr_ = j.at("lr").get<double>();
  best_ = from_nullable(j.at("best"));
  counter_ = j.at("counter").get<std::size_t>();
}

EarlyStopper::EarlyStopper(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

bool EarlyStopper::step(double val_loss) {
  require_finite(val_loss, "validation loss given to the early stopper");
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    counter_ = 0;
    return false;
  }
  return ++counter_ >= patience_;
}

nlohmann::json EarlyStopper::state() const { return {{"best", finite_or_null(best_)}, {"counter", counter_}}; }

void EarlyStopper::restore(const nlohmann::json& j) {
  best_ = from_nullable(j.at("best"));
  counter_ = j.at("counter").get<std::size_t>();
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"learning_rate", e.learning_rate},
                    {"seconds", e.seconds},
                    {"steps", e.steps}});
  }
  return {{"epochs", rows},
          {"best_epoch", best_epoch},
          {"best_val_loss", finite_or_null(best_val_loss)},
          {"early_stopped", early_stopped}};
}

TrainHistory TrainHistory::from_json(const nlohmann::json& j) {
  TrainHistory h;
  for (const auto& r : j.at("epochs")) {
    h.epochs.push_back(EpochRecord{r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                                   r.at("val_loss").get<double>(), r.at("learning_rate").get<double>(),
                                   r.at("seconds").get<double>(), r.at("steps").get<std::size_t>()});
  }
  h.best_epoch = j.at("best_epoch").get<std::size_t>();
  h.best_val_loss = from_nullable(j.at("best_val_loss"));
  h.early_stopped = j.at("early_stopped").get<bool>();
  return h;
}

Var sample_loss(Tape& tape, VtDtsn& model, const SliceSample& sample, const TrainConfig& cfg,
                std::mt19937_64* dropout_rng) {
  ForwardOptions opts;
  opts.rng = dropout_rng;
  Var pred = model.forward(tape, sample.input, opts);
  return composite_loss(pred, tensor_from_image(sample.target), cfg.loss, cfg.ssim);
}

double accumulate_step(VtDtsn& model, const std::vector<std::vector<const SliceSample*>>& micro_batches,
                       const TrainConfig& cfg, std::mt19937_64* dropout_rng) {
  std::size_t total = 0;
  for (const auto& mb : micro_batches) total += mb.size();
  if (total == 0) throw ConfigError("accumulate_step: empty batch");
  const double inv = 1.0 / static_cast<double>(total);
  double loss_sum = 0.0;
  for (const auto& mb : micro_batches) {
    for (const SliceSample* s : mb) {
      Tape tape;
      Var loss = ops::scale(sample_loss(tape, model, *s, cfg, dropout_rng), inv);
      loss_sum += loss.value()[0];
      tape.backward(loss);
    }
  }
  return loss_sum;
}

double evaluate_loss(const VtDtsn& model, const std::vector<SliceSample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) throw ConfigError("evaluate_loss: no samples");
  double sum = 0.0;
  for (const auto& s : samples) {
    const Image pred = model.predict(s.input);
    sum += composite_loss(s.target.pixels, pred.pixels, cfg.loss, cfg.ssim);
  }
  return sum / static_cast<double>(samples.size());
}

namespace {

constexpr const char* kStateArchive = "train_state.vtw";
constexpr const char* kStateJson = "train_state.json";

struct FitState {
  std::size_t epochs_done = 0;
  std::size_t total_steps = 0;
  TrainHistory history;
};

void save_state(const std::filesystem::path& dir, const VtDtsn& model, const ParamStore& best, const AdamState& adam,
                const PlateauScheduler& sched, const EarlyStopper& stopper, const FitState& st,
                const TrainConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::vector<WeightEntry> entries = entries_from_store(model.params(), DType::f64, "param/");
  for (auto& e : entries_from_store(best, DType::f64, "best/")) entries.push_back(std::move(e));
  std::size_t i = 0;
  for (const auto& p : model.params()) {
    entries.push_back(WeightEntry{"adam_m/" + p.name, DType::f64, adam.first_moment[i]});
    entries.push_back(WeightEntry{"adam_v/" + p.name, DType::f64, adam.second_moment[i]});
    ++i;
  }
  save_weights(dir / kStateArchive, entries);
  nlohmann::json j{{"epochs_done", st.epochs_done},
                   {"total_steps", st.total_steps},
                   {"adam_step_count", adam.step_count},
                   {"scheduler", sched.state()},
                   {"stopper", stopper.state()},
                   {"history", st.history.to_json()},
                   {"train_config", train_config_to_json(cfg)}};
  write_file(dir / kStateJson, j.dump(2) + "\n");
}

bool load_state(const std::filesystem::path& dir, VtDtsn& model, ParamStore& best, AdamState& adam,
                PlateauScheduler& sched, EarlyStopper& stopper, FitState& st, const TrainConfig& cfg) {
  if (!std::filesystem::exists(dir / kStateJson) || !std::filesystem::exists(dir / kStateArchive)) return false;
  const nlohmann::json j = nlohmann::json::parse(read_file(dir / kStateJson));
  const auto saved_cfg = j.at("train_config");
  nlohmann::json now = train_config_to_json(cfg);
  // The epoch budget may be extended on resume; everything else must match.
  nlohmann::json a = saved_cfg, b = now;
  a.erase("max_epochs");
  b.erase("max_epochs");
  a.erase("max_steps");
  b.erase("max_steps");
  if (a != b) throw ConfigError("resume: training configuration differs from the checkpoint in " + dir.string());

  const auto entries = load_weights(dir / kStateArchive);
  std::unordered_map<std::string, const WeightEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  load_into(model.params(), entries, "param/");
  load_into(best, entries, "best/");
  std::size_t i = 0;
  for (const auto& p : model.params()) {
    auto m = by_name.find("adam_m/" + p.name), v = by_name.find("adam_v/" + p.name);
    if (m == by_name.end() || v == by_name.end()) throw LoadError("resume: missing optimizer state for " + p.name);
    adam.first_moment[i] = m->second->values;
    adam.second_moment[i] = v->second->values;
    ++i;
  }
  adam.step_count = j.at("adam_step_count").get<std::uint64_t>();
  sched.restore(j.at("scheduler"));
  stopper.restore(j.at("stopper"));
  st.epochs_done = j.at("epochs_done").get<std::size_t>();
  st.total_steps = j.at("total_steps").get<std::size_t>();
  st.history = TrainHistory::from_json(j.at("history"));
  return true;
}

}  // namespace

TrainHistory fit(VtDtsn& model, const std::vector<SliceSample>& train, const std::vector<SliceSample>& validation,
                 const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  if (train.empty()) throw ConfigError("fit: training set is empty");
  const auto& monitor = validation.empty() ? train : validation;

  AdamOptions adam_opts;
  adam_opts.learning_rate = cfg.learning_rate;
  AdamState adam = AdamState::for_params(model.params(), adam_opts);
  PlateauScheduler sched(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor, cfg.min_delta, cfg.lr_min);
  EarlyStopper stopper(cfg.early_stop_patience, cfg.min_delta);
  ParamStore best = model.params();
  FitState st;

  if (options.resume && !options.checkpoint_dir.empty()) {
    load_state(options.checkpoint_dir, model, best, adam, sched, stopper, st, cfg);
    if (st.history.early_stopped) {
      model.params().assign_values(best);
      return st.history;
    }
  }

  const std::size_t group = cfg.effective_batch();
  for (std::size_t epoch = st.epochs_done + 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.max_steps != 0 && st.total_steps >= cfg.max_steps) break;
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, epoch, 1));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, epoch, 2));

    const double lr = sched.lr();
    adam.options.learning_rate = lr;
    double loss_sum = 0.0;
    std::size_t seen = 0, steps = 0;
    for (std::size_t start = 0; start < order.size(); start += group) {
      const std::size_t end = std::min(order.size(), start + group);
      std::vector<std::vector<const SliceSample*>> mbs;
      for (std::size_t m = start; m < end; m += cfg.micro_batch) {
        std::vector<const SliceSample*> mb;
        for (std::size_t i = m; i < std::min(end, m + cfg.micro_batch); ++i) mb.push_back(&train[order[i]]);
        mbs.push_back(std::move(mb));
      }
      model.params().zero_grad();
      const double loss = accumulate_step(model, mbs, cfg, &dropout_rng);
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(steps + 1));
      }
      adam_step(model.params(), adam);
      if (options.after_step) options.after_step(model.params());
      loss_sum += loss * static_cast<double>(end - start);
      seen += end - start;
      ++steps;
      ++st.total_steps;
      if (cfg.max_steps != 0 && st.total_steps >= cfg.max_steps) break;
    }

    const double val = evaluate_loss(model, monitor, cfg);
    if (!std::isfinite(val)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = val;
    rec.learning_rate = lr;
    rec.steps = steps;
    if (val < st.history.best_val_loss) {
      st.history.best_val_loss = val;
      st.history.best_epoch = epoch;
      best.assign_values(model.params());
    }
    const bool stop = stopper.step(val);
    sched.step(val);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.history.epochs.push_back(rec);
    st.history.early_stopped = stop;
    st.epochs_done = epoch;
    if (options.on_epoch) options.on_epoch(rec);
    if (!options.checkpoint_dir.empty() && options.checkpoint_every != 0 &&
        (epoch % options.checkpoint_every == 0 || stop || epoch == cfg.max_epochs ||
         (cfg.max_steps != 0 && st.total_steps >= cfg.max_steps))) {
      save_state(options.checkpoint_dir, model, best, adam, sched, stopper, st, cfg);
    }
    if (stop) break;
  }
  model.params().assign_values(best);
  return st.history;
}

}  // namespace vtdtsn
