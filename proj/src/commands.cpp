#include "vtdtsn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "CLI11.hpp"
#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/errors.hpp"
#include "vtdtsn/report.hpp"
#include "vtdtsn/rng.hpp"

namespace vtdtsn {

namespace {

constexpr const char* kModelWeights = "model.vtw";
constexpr const char* kModelSidecar = "model.json";

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string join(const std::vector<std::string>& items, const char* sep = ", ") {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : sep) + i;
  return s;
}

nlohmann::json ids_json(const std::vector<std::uint32_t>& ids) { return nlohmann::json(ids); }

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("cannot create output directory '" + dir.string() + "'");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  try {
    write_file(path, text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot write '") + path.string() + "': " + e.what());
  }
}

std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix) {
  return out.parent_path() / (out.stem().string() + suffix + ".csv");
}

// Slice dimensions shared by every volume.
std::pair<std::size_t, std::size_t> data_dims(const std::vector<Volume>& volumes) {
  const std::size_t h = volumes.front().height, w = volumes.front().width;
  for (const auto& v : volumes) {
    if (v.height != h || v.width != w) {
      throw LoadError("volumes disagree in slice size: " + std::to_string(h) + "x" + std::to_string(w) + " and " +
                      std::to_string(v.height) + "x" + std::to_string(v.width));
    }
  }
  return {h, w};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const VtDtsn& model, const AppConfig& cfg,
                     const DatasetSplit& split) {
  ensure_dir(dir);
  save_weights(dir / kModelWeights, entries_from_store(model.params(), DType::f32));
  nlohmann::json side{{"model", model_config_to_json(model.config())},
                      {"preprocess", preprocess_to_json(cfg.preprocess)},
                      {"target", std::string(target_mode_name(cfg.target))},
                      {"split",
                       {{"train", ids_json(split.train)},
                        {"validation", ids_json(split.validation)},
                        {"test", ids_json(split.test)}}},
                      {"seed", cfg.seed},
                      {"train", train_config_to_json(cfg.train)}};
  write_text(dir / kModelSidecar, side.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& weights) {
  const auto side_path = dir / kModelSidecar;
  if (!std::filesystem::exists(side_path)) throw LoadError("no checkpoint sidecar at '" + side_path.string() + "'");
  Checkpoint ck;
  try {
    const auto j = nlohmann::json::parse(read_file(side_path));
    ck.model = model_config_from_json(j.at("model"));
    ck.preprocess = preprocess_from_json(j.at("preprocess"));
    ck.target = parse_target_mode(j.at("target").get<std::string>());
    ck.split.train = j.at("split").at("train").get<std::vector<std::uint32_t>>();
    ck.split.validation = j.at("split").at("validation").get<std::vector<std::uint32_t>>();
    ck.split.test = j.at("split").at("test").get<std::vector<std::uint32_t>>();
    ck.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed checkpoint sidecar '" + side_path.string() + "': " + e.what());
  }
  const auto wpath = weights.value_or(dir / kModelWeights);
  if (!std::filesystem::exists(wpath)) throw LoadError("weights file '" + wpath.string() + "' not found");
  if (wpath.extension() == ".vtq") {
    QuantizedModel qm{ck.model, decode_quantized(read_file(wpath))};
    VtDtsn m = dequantize_model(qm);
    ck.weights = entries_from_store(m.params(), DType::f64);
  } else {
    ck.weights = load_weights(wpath);
  }
  return ck;
}

VtDtsn model_from_checkpoint(const Checkpoint& ck) {
  VtDtsn model(ck.model, 0);
  load_into(model.params(), ck.weights);
  return model;
}

std::vector<std::string> checkpoint_mismatches(const Checkpoint& ck, const AppConfig& cfg) {
  std::vector<std::string> out;
  ModelConfig mc = cfg.model;
  mc.image_height = ck.model.image_height;
  mc.image_width = ck.model.image_width;
  for (const auto& d : model_config_differences(ck.model, mc)) {
    const auto dot = d.find('.');
    out.push_back("model." + (dot == std::string::npos ? d : d.substr(dot + 1)));
  }
  const auto a = preprocess_to_json(ck.preprocess), b = preprocess_to_json(cfg.preprocess);
  for (const auto& [k, v] : a.items()) {
    if (b.at(k) != v) out.push_back("data." + (k == "order" ? std::string("filter_order") : k));
  }
  if (ck.target != cfg.target) out.push_back("data.target");
  return out;
}

std::vector<Volume> cmd_gen_data(const AppConfig& cfg, const std::filesystem::path& out, std::ostream& log) {
  ensure_dir(out);
  auto volumes = generate_dataset(cfg.gen, cfg.generator_seed());
  nlohmann::json files = nlohmann::json::array();
  std::size_t slices = 0;
  for (const auto& v : volumes) {
    const std::string name = volume_file_name(v.replicate_id, v.timepoint_days);
    try {
      save_volume(v, out / name);
    } catch (const std::exception& e) {
      throw ConfigError("cannot write '" + (out / name).string() + "': " + e.what());
    }
    files.push_back({{"file", name},
                     {"replicate_id", v.replicate_id},
                     {"timepoint_days", v.timepoint_days},
                     {"depth", v.depth},
                     {"height", v.height},
                     {"width", v.width}});
    slices += v.depth;
    log << name << "  replicate " << v.replicate_id << "  day " << v.timepoint_days << "  " << v.depth << "x"
        << v.height << "x" << v.width << "\n";
  }
  nlohmann::json manifest{{"seed", cfg.seed}, {"volumes", volumes.size()}, {"slices", slices}, {"files", files}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  log << volumes.size() << " volumes, " << slices << " slices written to " << out.string() << "\n";
  return volumes;
}

TrainHistory cmd_train(const AppConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out,
                       bool resume, std::ostream& log) {
  const auto volumes = load_volume_dir(data_dir);
  const auto [h, w] = data_dims(volumes);
  const DatasetSplit split = split_replicates(replicate_ids(volumes), cfg.split, cfg.split_seed());
  const SampleSets sets = build_sample_sets(volumes, split, cfg.preprocess, cfg.target);
  if (sets.train.empty()) throw ConfigError("training split has no samples");

  ModelConfig mc = cfg.model;
  mc.image_height = h;
  mc.image_width = w;
  VtDtsn model(mc, cfg.init_seed());
  TrainConfig tc = cfg.train;
  tc.seed = cfg.train_seed();

  log << "train " << sets.train.size() << " slices (" << split.train.size() << " replicates), validation "
      << sets.validation.size() << ", test " << sets.test.size() << "; " << model.params().element_count()
      << " parameters\n";
  ensure_dir(out);
  FitOptions opts;
  opts.checkpoint_dir = out / "state";
  opts.checkpoint_every = cfg.checkpoint_every;
  opts.resume = resume;
  opts.on_epoch = [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << "/" << tc.max_epochs << "  train " << fixed(r.train_loss) << "  val "
        << fixed(r.val_loss) << "  lr " << fixed(r.learning_rate, 3) << "  steps " << r.steps << "  "
        << fixed(r.seconds, 3) << "s\n";
  };
  const TrainHistory hist = fit(model, sets.train, sets.validation, tc, opts);

  AppConfig saved = cfg;
  saved.model = mc;
  save_checkpoint(out, model, saved, split);
  write_text(out / "history.json", hist.to_json().dump(2) + "\n");
  write_text(out / "config.txt", config_to_text(cfg));
  log << "best epoch " << hist.best_epoch << " val " << fixed(hist.best_val_loss)
      << (hist.early_stopped ? " (early stop)" : "") << "; checkpoint in " << out.string() << "\n";
  return hist;
}

EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out, const EvalOptions& options,
                    const std::optional<AppConfig>& cfg, const std::optional<std::filesystem::path>& weights,
                    std::ostream& log) {
  const Checkpoint ck = load_checkpoint(checkpoint, weights);
  if (cfg) {
    const auto diff = checkpoint_mismatches(ck, *cfg);
    if (!diff.empty()) throw ConfigError("config does not match checkpoint in: " + join(diff));
  }
  const VtDtsn model = model_from_checkpoint(ck);
  const auto volumes = load_volume_dir(data_dir);
  const auto [h, w] = data_dims(volumes);
  if (h != ck.model.image_height || w != ck.model.image_width) {
    throw ConfigError("data slices are " + std::to_string(h) + "x" + std::to_string(w) + " but the checkpoint expects " +
                      std::to_string(ck.model.image_height) + "x" + std::to_string(ck.model.image_width));
  }
  std::vector<std::uint32_t> ids;
  switch (options.split) {
    case EvalSplit::train: ids = ck.split.train; break;
    case EvalSplit::validation: ids = ck.split.validation; break;
    case EvalSplit::test: ids = ck.split.test; break;
    case EvalSplit::all: ids = replicate_ids(volumes); break;
  }
  const auto present = replicate_ids(volumes);
  for (auto id : ids) {
    if (std::find(present.begin(), present.end(), id) == present.end()) {
      throw LoadError("replicate " + std::to_string(id) + " of the " + std::string(eval_split_name(options.split)) +
                      " split is missing from '" + data_dir.string() + "'");
    }
  }
  const auto samples = build_samples(volumes, ids, ck.preprocess, ck.target);
  if (samples.empty()) throw ConfigError("no slices to evaluate in the " + std::string(eval_split_name(options.split)) + " split");

  const auto rows = evaluate_slices(model, samples);
  std::vector<ExtraColumn> extra;
  if (options.windowed_ssim || options.feature_cosine) {
    ExtraColumn win{"ssim_windowed", {}}, feat{"feature_cosine", {}};
    for (const auto& s : samples) {
      const Image pred = model.predict(s.input);
      if (options.windowed_ssim) win.values.push_back(ssim_windowed(s.target, pred));
      if (options.feature_cosine) {
        double c = std::nan("");
        try {
          c = cosine_similarity(model.feature_vector(pred), model.feature_vector(s.target));
        } catch (const DegenerateInputError&) {
        }
        feat.values.push_back(c);
      }
    }
    if (options.windowed_ssim) extra.push_back(std::move(win));
    if (options.feature_cosine) extra.push_back(std::move(feat));
  }

  EvalResult r;
  r.rows = metrics_rows_table(rows, extra);
  r.layers = aggregate_by(r.rows, "z_layer");
  r.replicates = aggregate_by(r.rows, "replicate_id");
  r.histograms = metric_histograms(r.rows, 20);
  write_text(out, write_csv(r.rows));
  write_text(sibling(out, "_layers"), write_csv(r.layers));
  write_text(sibling(out, "_replicates"), write_csv(r.replicates));
  write_text(sibling(out, "_hist"), write_csv(r.histograms));

  const MetricMeans m = mean_metrics(rows);
  log << "evaluated " << rows.size() << " slices of " << ids.size() << " replicate(s), split "
      << eval_split_name(options.split) << "\n"
      << "mean mse " << fixed(m.mse) << " (x255^2: " << fixed(m.mse * kMse255Scale) << ")  ssim " << fixed(m.ssim)
      << "  cosine " << fixed(m.cosine) << "\n"
      << "rows " << out.string() << ", layers " << r.layers.rows.size() << ", replicates " << r.replicates.rows.size()
      << "\n";
  return r;
}

CompressionReport cmd_compress(const std::filesystem::path& checkpoint, const CompressOptions& options,
                               const std::filesystem::path& out, const std::optional<std::filesystem::path>& data_dir,
                               std::ostream& log) {
  if (!(options.sparsity >= 0.0 && options.sparsity < 1.0)) throw ConfigError("sparsity must lie in [0,1)");
  const Checkpoint ck = load_checkpoint(checkpoint);
  const VtDtsn original = model_from_checkpoint(ck);
  VtDtsn pruned = original;
  const PruneMask mask = magnitude_prune(pruned.params(), options.sparsity);

  SampleSets sets;
  if (data_dir) {
    const auto volumes = load_volume_dir(*data_dir);
    sets = build_sample_sets(volumes, ck.split, ck.preprocess, ck.target);
  }
  if (options.finetune_steps > 0) {
    if (!data_dir) throw ConfigError("fine-tuning after pruning needs --data-dir");
    const auto side = nlohmann::json::parse(read_file(checkpoint / kModelSidecar));
    TrainConfig tc = train_config_from_json(side.at("train"));
    tc.max_steps = options.finetune_steps;
    tc.max_epochs = options.finetune_steps;
    tc.seed = derive_seed(ck.seed, 5);
    FitOptions fo;
    fo.after_step = [&](ParamStore& s) { mask.apply(s); };
    fit(pruned, sets.train, sets.validation, tc, fo);
    log << "fine-tuned " << options.finetune_steps << " steps with the pruning mask held\n";
  }
  const QuantizedModel qm = quantize_model(pruned);
  const CompressionReport report = compression_report(original, pruned, mask, qm, sets.test);

  ensure_dir(out);
  save_weights(out / "pruned.vtw", entries_from_store(pruned.params(), DType::f32));
  write_text(out / "quantized.vtq", encode_quantized(qm.entries));
  write_text(out / kModelSidecar, read_file(checkpoint / kModelSidecar));
  write_text(out / "compression.json", report.to_json().dump(2) + "\n");
  write_text(out / "compression.csv", report.to_csv());

  log << "sparsity " << fixed(report.achieved_sparsity) << " (" << report.nonzero_prunable_count << " of "
      << report.prunable_count << " prunable weights nonzero)\n"
      << "payload " << report.float_payload_bytes << " B float32 -> " << report.quantized_payload_bytes
      << " B int8 (" << fixed(100.0 * report.payload_ratio, 4) << "%)\n";
  if (report.slices) {
    log << "test slices " << report.slices << ": ssim float " << fixed(report.float_metrics.ssim) << ", pruned "
        << fixed(report.pruned_metrics.ssim) << ", quantized " << fixed(report.quantized_metrics.ssim)
        << "; per-slice " << fixed(report.float_seconds_per_slice * 1e3, 4) << " ms float, "
        << fixed(report.quantized_seconds_per_slice * 1e3, 4) << " ms quantized\n";
  }
  return report;
}

CsvTable cmd_report(const std::vector<std::filesystem::path>& eval_csvs, const std::filesystem::path& out,
                    std::ostream& log) {
  std::vector<CsvTable> tables;
  for (const auto& p : eval_csvs) {
    if (!std::filesystem::exists(p)) throw LoadError("eval CSV '" + p.string() + "' not found");
    try {
      tables.push_back(parse_csv(read_file(p)));
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  const CsvTable t = replicate_report(tables);
  write_text(out, write_csv(t));
  log << "replicate  slices  mse        ssim       cosine\n";
  for (const auto& r : t.rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%9s  %6s  %-9.6g  %-9.6g  %-9.6g\n", r[0].c_str(), r[1].c_str(),
                  parse_double(r[2], "mse"), parse_double(r[3], "ssim"), parse_double(r[4], "cosine"));
    log << buf;
  }
  return t;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"VT-DTSN: multi-view ViT reconstruction of confocal Z-stack slices"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, split, weights;
  std::uint64_t seed = 0;
  double sparsity = 0.0;
  bool resume = false;
  std::vector<std::string> inputs;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic Z-stack dataset");
  gen->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Override the config seed");

  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  train->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  train->add_option("--data-dir", data_dir, "Directory of .vst volumes")->required();
  train->add_option("--out", out_path, "Checkpoint directory")->required();
  auto* train_seed = train->add_option("--seed", seed, "Override the config seed");
  train->add_flag("--resume", resume, "Continue from the state saved in the checkpoint directory");

  auto* eval = app.add_subcommand("eval", "Per-slice metrics with layer and replicate aggregates");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data-dir", data_dir, "Directory of .vst volumes")->required();
  eval->add_option("--out", out_path, "Rows CSV; aggregates are written next to it")->required();
  eval->add_option("--config", config_path, "Config to validate against the checkpoint")->check(CLI::ExistingFile);
  auto* eval_split = eval->add_option("--split", split, "train, validation, test or all");
  eval->add_option("--weights", weights, "Weights file (.vtw or .vtq) replacing model.vtw")->check(CLI::ExistingFile);

  auto* comp = app.add_subcommand("compress", "Prune and quantize a checkpoint");
  comp->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  comp->add_option("--out", out_path, "Output directory")->required();
  comp->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  auto* comp_sparsity = comp->add_option("--sparsity", sparsity, "Fraction of prunable weights to zero");
  comp->add_option("--data-dir", data_dir, "Dataset for metrics and fine-tuning");

  auto* rep = app.add_subcommand("report", "Per-replicate means from eval CSVs");
  rep->add_option("inputs", inputs, "Eval rows CSVs")->required();
  rep->add_option("--out", out_path, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
    if (gen->parsed()) {
      if (gen_seed->count()) cfg.seed = seed;
      cmd_gen_data(cfg, out_path, out);
    } else if (train->parsed()) {
      if (train_seed->count()) cfg.seed = seed;
      cmd_train(cfg, data_dir, out_path, resume, out);
    } else if (eval->parsed()) {
      EvalOptions eo = cfg.eval;
      if (eval_split->count()) eo.split = parse_eval_split(split);
      std::optional<AppConfig> check;
      if (!config_path.empty()) check = cfg;
      std::optional<std::filesystem::path> w;
      if (!weights.empty()) w = weights;
      cmd_eval(checkpoint, data_dir, out_path, eo, check, w, out);
    } else if (comp->parsed()) {
      CompressOptions co = cfg.compress;
      if (comp_sparsity->count()) co.sparsity = sparsity;
      std::optional<std::filesystem::path> d;
      if (!data_dir.empty()) d = data_dir;
      cmd_compress(checkpoint, co, out_path, d, out);
    } else if (rep->parsed()) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      cmd_report(paths, out_path, out);
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vtdtsn
