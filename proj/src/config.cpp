#include "vtdtsn/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/csv.hpp"
#include "vtdtsn/errors.hpp"
#include "vtdtsn/rng.hpp"

namespace vtdtsn {

EvalSplit parse_eval_split(std::string_view s) {
  if (s == "train") return EvalSplit::train;
  if (s == "validation") return EvalSplit::validation;
  if (s == "test") return EvalSplit::test;
  if (s == "all") return EvalSplit::all;
  throw ConfigError("unknown split '" + std::string(s) + "' (train, validation, test, all)");
}

std::string_view eval_split_name(EvalSplit s) {
  switch (s) {
    case EvalSplit::train: return "train";
    case EvalSplit::validation: return "validation";
    case EvalSplit::test: return "test";
    case EvalSplit::all: return "all";
  }
  return "?";
}

std::uint64_t AppConfig::generator_seed() const { return derive_seed(seed, 1); }
std::uint64_t AppConfig::split_seed() const { return derive_seed(seed, 2); }
std::uint64_t AppConfig::init_seed() const { return derive_seed(seed, 3); }
std::uint64_t AppConfig::train_seed() const { return derive_seed(seed, 4); }

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  try {
    const double d = parse_double(v, "config value");
    if (!std::isfinite(d)) throw ConfigError("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Binding {
  std::function<void(AppConfig&, const std::string&)> set;
  std::function<std::string(const AppConfig&)> get;
};

template <typename T>
Binding size_binding(T AppConfig::*group, std::size_t T::*field) {
  return {[=](AppConfig& c, const std::string& v) { (c.*group).*field = static_cast<std::size_t>(to_u64(v)); },
          [=](const AppConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename T>
Binding double_binding(T AppConfig::*group, double T::*field) {
  return {[=](AppConfig& c, const std::string& v) { (c.*group).*field = to_double(v); },
          [=](const AppConfig& c) { return format_double((c.*group).*field); }};
}

template <typename T>
Binding bool_binding(T AppConfig::*group, bool T::*field) {
  return {[=](AppConfig& c, const std::string& v) { (c.*group).*field = to_bool(v); },
          [=](const AppConfig& c) { return std::string((c.*group).*field ? "true" : "false"); }};
}

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> b;
    b["seed"] = {[](AppConfig& c, const std::string& v) { c.seed = to_u64(v); },
                 [](const AppConfig& c) { return std::to_string(c.seed); }};

    b["gen.replicates"] = {[](AppConfig& c, const std::string& v) {
                             const auto n = to_u64(v);
                             if (n > 99) throw ConfigError("at most 99 replicates");
                             c.gen.replicates = static_cast<std::uint32_t>(n);
                           },
                           [](const AppConfig& c) { return std::to_string(c.gen.replicates); }};
    b["gen.timepoints"] = {[](AppConfig& c, const std::string& v) {
                             c.gen.timepoints.clear();
                             for (const auto& item : split_list(v)) {
                               const auto t = to_u64(item);
                               if (t > 99) throw ConfigError("timepoints must be at most 99 days");
                               c.gen.timepoints.push_back(static_cast<std::uint16_t>(t));
                             }
                           },
                           [](const AppConfig& c) {
                             std::string s;
                             for (auto t : c.gen.timepoints) s += (s.empty() ? "" : ",") + std::to_string(t);
                             return s;
                           }};
    b["gen.depth"] = size_binding(&AppConfig::gen, &GeneratorConfig::depth);
    b["gen.height"] = size_binding(&AppConfig::gen, &GeneratorConfig::height);
    b["gen.width"] = size_binding(&AppConfig::gen, &GeneratorConfig::width);
    b["gen.cells"] = size_binding(&AppConfig::gen, &GeneratorConfig::cells);
    b["gen.cell_growth"] = double_binding(&AppConfig::gen, &GeneratorConfig::cell_growth);
    b["gen.cell_radius"] = double_binding(&AppConfig::gen, &GeneratorConfig::cell_radius);
    b["gen.background"] = double_binding(&AppConfig::gen, &GeneratorConfig::background);
    b["gen.attenuation_depth"] = double_binding(&AppConfig::gen, &GeneratorConfig::attenuation_depth);
    b["gen.noise"] = double_binding(&AppConfig::gen, &GeneratorConfig::noise);
    b["gen.noise_growth"] = double_binding(&AppConfig::gen, &GeneratorConfig::noise_growth);

    b["data.train_ratio"] = double_binding(&AppConfig::split, &SplitRatios::train);
    b["data.validation_ratio"] = double_binding(&AppConfig::split, &SplitRatios::validation);
    b["data.test_ratio"] = double_binding(&AppConfig::split, &SplitRatios::test);
    b["data.median"] = bool_binding(&AppConfig::preprocess, &PreprocessOptions::median);
    b["data.gaussian"] = bool_binding(&AppConfig::preprocess, &PreprocessOptions::gaussian);
    b["data.gaussian_sigma"] = double_binding(&AppConfig::preprocess, &PreprocessOptions::gaussian_sigma);
    b["data.normalize"] = bool_binding(&AppConfig::preprocess, &PreprocessOptions::normalize);
    b["data.filter_order"] = {
        [](AppConfig& c, const std::string& v) { c.preprocess.order = parse_filter_order(v); },
        [](const AppConfig& c) { return std::string(filter_order_name(c.preprocess.order)); }};
    b["data.target"] = {[](AppConfig& c, const std::string& v) { c.target = parse_target_mode(v); },
                        [](const AppConfig& c) { return std::string(target_mode_name(c.target)); }};

    b["model.crop_fraction"] = double_binding(&AppConfig::model, &ModelConfig::crop_fraction);
    auto vit_size = [](std::size_t ViTConfig::*f) {
      return Binding{[f](AppConfig& c, const std::string& v) { c.model.vit.*f = static_cast<std::size_t>(to_u64(v)); },
                     [f](const AppConfig& c) { return std::to_string(c.model.vit.*f); }};
    };
    b["model.patch"] = vit_size(&ViTConfig::patch);
    b["model.embed_dim"] = vit_size(&ViTConfig::embed_dim);
    b["model.depth"] = vit_size(&ViTConfig::depth);
    b["model.heads"] = vit_size(&ViTConfig::heads);
    b["model.mlp_ratio"] = vit_size(&ViTConfig::mlp_ratio);
    b["model.view_height"] = vit_size(&ViTConfig::view_height);
    b["model.view_width"] = vit_size(&ViTConfig::view_width);
    b["model.dropout"] = {[](AppConfig& c, const std::string& v) { c.model.vit.dropout = to_double(v); },
                          [](const AppConfig& c) { return format_double(c.model.vit.dropout); }};
    auto fusion_size = [](std::size_t FusionConfig::*f) {
      return Binding{
          [f](AppConfig& c, const std::string& v) { c.model.fusion.*f = static_cast<std::size_t>(to_u64(v)); },
          [f](const AppConfig& c) { return std::to_string(c.model.fusion.*f); }};
    };
    b["model.fused_hidden"] = fusion_size(&FusionConfig::fused_hidden);
    b["model.decoder_channels"] = fusion_size(&FusionConfig::decoder_channels);
    b["model.seed_height"] = fusion_size(&FusionConfig::seed_height);
    b["model.seed_width"] = fusion_size(&FusionConfig::seed_width);
    b["model.decoder_activation"] = {
        [](AppConfig& c, const std::string& v) { c.model.fusion.decoder_activation = parse_activation(v); },
        [](const AppConfig& c) { return std::string(activation_name(c.model.fusion.decoder_activation)); }};

    auto loss = [](double LossWeights::*f) {
      return Binding{[f](AppConfig& c, const std::string& v) { c.train.loss.*f = to_double(v); },
                     [f](const AppConfig& c) { return format_double(c.train.loss.*f); }};
    };
    b["loss.alpha"] = loss(&LossWeights::alpha);
    b["loss.beta"] = loss(&LossWeights::beta);
    b["loss.gamma"] = loss(&LossWeights::gamma);

    b["train.micro_batch"] = size_binding(&AppConfig::train, &TrainConfig::micro_batch);
    b["train.accumulation_steps"] = size_binding(&AppConfig::train, &TrainConfig::accumulation_steps);
    b["train.max_epochs"] = size_binding(&AppConfig::train, &TrainConfig::max_epochs);
    b["train.max_steps"] = size_binding(&AppConfig::train, &TrainConfig::max_steps);
    b["train.learning_rate"] = double_binding(&AppConfig::train, &TrainConfig::learning_rate);
    b["train.plateau_patience"] = size_binding(&AppConfig::train, &TrainConfig::plateau_patience);
    b["train.plateau_factor"] = double_binding(&AppConfig::train, &TrainConfig::plateau_factor);
    b["train.lr_min"] = double_binding(&AppConfig::train, &TrainConfig::lr_min);
    b["train.early_stop_patience"] = size_binding(&AppConfig::train, &TrainConfig::early_stop_patience);
    b["train.min_delta"] = double_binding(&AppConfig::train, &TrainConfig::min_delta);
    b["train.checkpoint_every"] = {
        [](AppConfig& c, const std::string& v) { c.checkpoint_every = static_cast<std::size_t>(to_u64(v)); },
        [](const AppConfig& c) { return std::to_string(c.checkpoint_every); }};

    b["eval.split"] = {[](AppConfig& c, const std::string& v) { c.eval.split = parse_eval_split(v); },
                       [](const AppConfig& c) { return std::string(eval_split_name(c.eval.split)); }};
    b["eval.feature_cosine"] = bool_binding(&AppConfig::eval, &EvalOptions::feature_cosine);
    b["eval.windowed_ssim"] = bool_binding(&AppConfig::eval, &EvalOptions::windowed_ssim);

    b["compress.sparsity"] = double_binding(&AppConfig::compress, &CompressOptions::sparsity);
    b["compress.finetune_steps"] = size_binding(&AppConfig::compress, &CompressOptions::finetune_steps);
    return b;
  }();
  return table;
}

}  // namespace

AppConfig parse_config(std::string_view text) {
  AppConfig cfg;
  std::set<std::string> seen;
  std::istringstream is{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = bindings().find(key);
    if (it == bindings().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(where + "empty value for '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.gen.validate();
  cfg.split.validate();
  cfg.train.validate();
  cfg.model.vit.validate();
  if (!(cfg.compress.sparsity >= 0.0 && cfg.compress.sparsity < 1.0)) {
    throw ConfigError("compress.sparsity must lie in [0,1)");
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  try {
    return parse_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_text(const AppConfig& cfg) {
  std::string out;
  for (const auto& [key, b] : bindings()) out += key + " = " + b.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, b] : bindings()) keys.push_back(key);
  return keys;
}

nlohmann::json preprocess_to_json(const PreprocessOptions& p) {
  return {{"median", p.median},
          {"gaussian", p.gaussian},
          {"gaussian_sigma", p.gaussian_sigma},
          {"order", std::string(filter_order_name(p.order))},
          {"normalize", p.normalize}};
}

PreprocessOptions preprocess_from_json(const nlohmann::json& j) {
  try {
    PreprocessOptions p;
    p.median = j.at("median").get<bool>();
    p.gaussian = j.at("gaussian").get<bool>();
    p.gaussian_sigma = j.at("gaussian_sigma").get<double>();
    p.order = parse_filter_order(j.at("order").get<std::string>());
    p.normalize = j.at("normalize").get<bool>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("preprocessing settings: ") + e.what());
  }
}

}  // namespace vtdtsn
