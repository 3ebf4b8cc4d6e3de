#include "vtdtsn/model.hpp"

#include <map>

#include "vtdtsn/errors.hpp"
#include "vtdtsn/views.hpp"

namespace vtdtsn {

void ModelConfig::validate() const {
  vit.validate();
  if (crop_fraction <= 0.0 || crop_fraction > 1.0) throw ConfigError("crop_fraction must lie in (0,1]");
  if (fusion.fused_hidden == 0) throw ConfigError("fused_hidden must be positive");
  decoder_channel_schedule(fusion, decoder_stages(fusion, image_height, image_width));
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {
      {"image_height", c.image_height},
      {"image_width", c.image_width},
      {"crop_fraction", c.crop_fraction},
      {"vit",
       {{"patch", c.vit.patch},
        {"embed_dim", c.vit.embed_dim},
        {"depth", c.vit.depth},
        {"heads", c.vit.heads},
        {"mlp_ratio", c.vit.mlp_ratio},
        {"dropout", c.vit.dropout},
        {"view_height", c.vit.view_height},
        {"view_width", c.vit.view_width}}},
      {"fusion",
       {{"fused_hidden", c.fusion.fused_hidden},
        {"decoder_channels", c.fusion.decoder_channels},
        {"seed_height", c.fusion.seed_height},
        {"seed_width", c.fusion.seed_width},
        {"decoder_activation", std::string(activation_name(c.fusion.decoder_activation))}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.image_height = j.at("image_height").get<std::size_t>();
    c.image_width = j.at("image_width").get<std::size_t>();
    c.crop_fraction = j.at("crop_fraction").get<double>();
    const auto& v = j.at("vit");
    c.vit.patch = v.at("patch").get<std::size_t>();
    c.vit.embed_dim = v.at("embed_dim").get<std::size_t>();
    c.vit.depth = v.at("depth").get<std::size_t>();
    c.vit.heads = v.at("heads").get<std::size_t>();
    c.vit.mlp_ratio = v.at("mlp_ratio").get<std::size_t>();
    c.vit.dropout = v.at("dropout").get<double>();
    c.vit.view_height = v.at("view_height").get<std::size_t>();
    c.vit.view_width = v.at("view_width").get<std::size_t>();
    const auto& f = j.at("fusion");
    c.fusion.fused_hidden = f.at("fused_hidden").get<std::size_t>();
    c.fusion.decoder_channels = f.at("decoder_channels").get<std::size_t>();
    c.fusion.seed_height = f.at("seed_height").get<std::size_t>();
    c.fusion.seed_width = f.at("seed_width").get<std::size_t>();
    c.fusion.decoder_activation = parse_activation(f.at("decoder_activation").get<std::string>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

std::vector<std::string> model_config_differences(const ModelConfig& a, const ModelConfig& b) {
  const auto fa = model_config_to_json(a).flatten();
  const auto fb = model_config_to_json(b).flatten();
  std::vector<std::string> out;
  for (const auto& [key, value] : fa.items()) {
    if (!fb.contains(key) || fb.at(key) != value) out.push_back(key.substr(1));
  }
  for (auto& k : out)
    for (auto& ch : k)
      if (ch == '/') ch = '.';
  return out;
}

VtDtsn::VtDtsn(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(init_seed);
  for (std::size_t b = 0; b < 3; ++b) branches_[b] = VitBranch(store_, kBranchPrefixes[b], cfg_.vit, rng);

  const std::size_t d = cfg_.vit.embed_dim, df = cfg_.fusion.fused_hidden;
  fc1_w_ = store_.add("fusion.fc1.weight", he_normal({3 * d, df}, 3 * d, rng));
  fc1_b_ = store_.add("fusion.fc1.bias", Tensor({df}, 0.0));
  fc2_w_ = store_.add("fusion.fc2.weight", he_normal({df, d}, df, rng));
  fc2_b_ = store_.add("fusion.fc2.bias", Tensor({d}, 0.0));

  const std::size_t stages = decoder_stages(cfg_.fusion, cfg_.image_height, cfg_.image_width);
  const auto ch = decoder_channel_schedule(cfg_.fusion, stages);
  const std::size_t seed_size = ch[0] * cfg_.fusion.seed_height * cfg_.fusion.seed_width;
  seed_w_ = store_.add("decoder.seed.weight", he_normal({d, seed_size}, d, rng));
  seed_b_ = store_.add("decoder.seed.bias", Tensor({seed_size}, 0.0));
  for (std::size_t s = 0; s < stages; ++s) {
    const std::string stage = "decoder.stage" + std::to_string(s) + ".conv.";
    conv_w_.push_back(store_.add(stage + "weight", he_normal({4 * ch[s + 1], ch[s], 3, 3}, 9 * ch[s], rng)));
    conv_b_.push_back(store_.add(stage + "bias", Tensor({4 * ch[s + 1]}, 0.0)));
  }
}

std::array<Image, 3> VtDtsn::prepare_views(const Image& slice) const {
  if (slice.height != cfg_.image_height || slice.width != cfg_.image_width) {
    throw ShapeError("model expects " + std::to_string(cfg_.image_height) + "x" +
                     std::to_string(cfg_.image_width) + " slices, got " + std::to_string(slice.height) + "x" +
                     std::to_string(slice.width));
  }
  const ViewTriplet v = make_views(slice, cfg_.crop_fraction);
  const std::size_t h = cfg_.vit.view_height, w = cfg_.vit.view_width;
  return {resize_bilinear(v.left, h, w), resize_bilinear(v.mid, h, w), resize_bilinear(v.right, h, w)};
}

Var VtDtsn::features(Tape& tape, const Image& slice, const ForwardOptions& opts) {
  const auto views = prepare_views(slice);
  std::vector<Var> parts;
  for (std::size_t b = 0; b < 3; ++b) {
    parts.push_back(opts.branches[b] ? branches_[b].encode(tape, store_, views[b], opts.rng)
                                     : tape.constant(Tensor({1, cfg_.vit.embed_dim}, 0.0)));
  }
  return ops::concat_cols(parts);
}

Var VtDtsn::fused(Tape& tape, const Image& slice, const ForwardOptions& opts) {
  const std::size_t d = cfg_.vit.embed_dim;
  Var cat = features(tape, slice, opts);
  return fuse(ops::slice_cols(cat, 0, d), ops::slice_cols(cat, d, 2 * d), ops::slice_cols(cat, 2 * d, 3 * d),
              FusionVars{tape.param(store_[fc1_w_]), tape.param(store_[fc1_b_]), tape.param(store_[fc2_w_]),
                         tape.param(store_[fc2_b_])});
}

Var VtDtsn::forward(Tape& tape, const Image& slice, const ForwardOptions& opts) {
  Var f = fused(tape, slice, opts);
  DecoderVars dv{tape.param(store_[seed_w_]), tape.param(store_[seed_b_]), {}, {}};
  for (std::size_t s = 0; s < conv_w_.size(); ++s) {
    dv.conv_weight.push_back(tape.param(store_[conv_w_[s]]));
    dv.conv_bias.push_back(tape.param(store_[conv_b_[s]]));
  }
  return reconstruct(f, dv, cfg_.fusion, cfg_.image_height, cfg_.image_width);
}

Image VtDtsn::predict(const Image& slice, const ForwardOptions& opts) const {
  // The tape only reads parameter values here; backward() is never called,
  // so no gradient buffer is touched.
  Tape tape;
  ForwardOptions eval = opts;
  eval.rng = nullptr;
  Var out = const_cast<VtDtsn*>(this)->forward(tape, slice, eval);
  return image_from_tensor(out.value());
}

std::vector<double> VtDtsn::feature_vector(const Image& slice) const {
  Tape tape;
  return const_cast<VtDtsn*>(this)->features(tape, slice).value().values();
}

std::size_t VtDtsn::fusion_param_count() const {
  return store_[fc1_w_].value.size() + store_[fc1_b_].value.size() + store_[fc2_w_].value.size() +
         store_[fc2_b_].value.size();
}

void VtDtsn::load_branch(const std::vector<WeightEntry>& donor, Branch branch, const std::string& donor_prefix) {
  const std::string own = std::string(kBranchPrefixes[static_cast<std::size_t>(branch)]) + ".";
  std::map<std::string, const WeightEntry*> available;
  for (const auto& e : donor) {
    if (e.name.starts_with(donor_prefix)) available[e.name.substr(donor_prefix.size())] = &e;
  }
  std::vector<std::string> missing, mismatched;
  std::vector<std::pair<ParamTensor*, const WeightEntry*>> pairs;
  for (auto& p : store_) {
    if (!p.name.starts_with(own)) continue;
    const std::string rel = p.name.substr(own.size());
    auto it = available.find(rel);
    if (it == available.end()) {
      missing.push_back(donor_prefix + rel);
      continue;
    }
    if (it->second->values.shape() != p.value.shape()) {
      mismatched.push_back(donor_prefix + rel + " " + shape_string(it->second->values.shape()) + " vs " +
                           shape_string(p.value.shape()));
    } else {
      pairs.emplace_back(&p, it->second);
    }
    available.erase(it);
  }
  if (!missing.empty() || !available.empty() || !mismatched.empty()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
      return s;
    };
    std::vector<std::string> extra;
    for (const auto& [rel, e] : available) extra.push_back(e->name);
    std::string msg = "cannot load " + own.substr(0, own.size() - 1) + " from donor:";
    if (!missing.empty()) msg += " missing (" + std::to_string(missing.size()) + "): " + join(missing) + ";";
    if (!extra.empty()) msg += " extra (" + std::to_string(extra.size()) + "): " + join(extra) + ";";
    if (!mismatched.empty()) msg += " shape mismatch: " + join(mismatched) + ";";
    throw LoadError(msg);
  }
  for (auto& [p, e] : pairs) p->value = e->values;
}

Image image_from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("image_from_tensor: rank " + std::to_string(t.rank()));
  return Image(t.dim(0), t.dim(1), t.values());
}

Tensor tensor_from_image(const Image& image) {
  return Tensor({image.height, image.width}, image.pixels);
}

}  // namespace vtdtsn
