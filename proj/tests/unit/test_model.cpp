#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "vtdtsn/errors.hpp"
#include "vtdtsn/grad_check.hpp"
#include "vtdtsn/metrics.hpp"
#include "vtdtsn/model.hpp"

using namespace vtdtsn;
using vtdtsn::testing::random_tensor;
using vtdtsn::testing::randomize_params;

namespace {

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_height = 32;
  c.image_width = 32;
  c.vit.patch = 4;
  c.vit.embed_dim = 8;
  c.vit.depth = 1;
  c.vit.heads = 2;
  c.vit.dropout = 0.0;
  c.vit.view_height = 8;
  c.vit.view_width = 8;
  c.fusion.fused_hidden = 16;
  c.fusion.decoder_channels = 4;
  c.fusion.seed_height = 4;
  c.fusion.seed_width = 4;
  return c;
}

BlockVars block_vars(Tape& tape, ParamStore& store, const std::string& prefix) {
  auto p = [&](const std::string& n) { return tape.param(store.at(prefix + n)); };
  return BlockVars{p("norm1.gamma"), p("norm1.beta"), p("attn.qkv.weight"), p("attn.qkv.bias"),
                   p("attn.proj.weight"), p("attn.proj.bias"), p("norm2.gamma"), p("norm2.beta"),
                   p("mlp.fc1.weight"), p("mlp.fc1.bias"), p("mlp.fc2.weight"), p("mlp.fc2.bias")};
}

}  // namespace

TEST_CASE("patchify shapes and inverse") {
  std::mt19937_64 rng(1);
  CHECK(patchify(Image(224, 224), 8).shape() == Shape{784, 64});

  Image small = random_image(8, 8, rng);
  Tensor one = patchify(small, 8);
  CHECK(one.shape() == Shape{1, 64});
  CHECK(one.values() == small.pixels);

  Image img = random_image(12, 16, rng);
  Tensor p = patchify(img, 4);
  CHECK(p.shape() == Shape{12, 16});
  CHECK(p.at(1, 0) == img.at(0, 4));
  CHECK(p.at(4, 5) == img.at(5, 1));
  CHECK(unpatchify(p, 12, 16, 4) == img);
  CHECK_THROWS_AS(patchify(Image(10, 8), 4), ShapeError);
}

TEST_CASE("embed") {
  std::mt19937_64 rng(2);
  Tape tape;
  Var z = embed(tape.constant(Tensor({4, 16})), tape.constant(random_tensor({16, 8}, rng)),
                tape.constant(Tensor({4, 8})));
  CHECK(z.value() == Tensor({4, 8}));

  Tensor patch = random_tensor({1, 4}, rng);
  Tensor w({4, 6});
  for (std::size_t i = 0; i < 4; ++i) w.at(i, i) = 1.0;
  Var e = embed(tape.constant(patch), tape.constant(w), tape.constant(Tensor({1, 6})));
  for (std::size_t i = 0; i < 4; ++i) CHECK(e.value().at(0, i) == patch[i]);

  CHECK_THROWS_AS(embed(tape.constant(Tensor({4, 16})), tape.constant(Tensor({15, 8})),
                        tape.constant(Tensor({4, 8}))),
                  ShapeError);

  const Tensor w_embed = random_tensor({16, 8}, rng), pos = random_tensor({4, 8}, rng);
  const Tensor weights = random_tensor({4, 8}, rng);
  auto r = grad_check(
      [&](Tape& t, Var x) {
        return ops::sum(ops::mul(embed(x, t.constant(w_embed), t.constant(pos)), t.constant(weights)));
      },
      random_tensor({4, 16}, rng));
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("attention block contracts") {
  std::mt19937_64 rng(3);
  ViTConfig cfg;
  cfg.patch = 4;
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.view_height = 8;
  cfg.view_width = 8;
  ParamStore store;
  VitBranch branch(store, "b", cfg, rng);
  randomize_params(store, rng);

  SUBCASE("single token attends to itself") {
    Tape tape;
    std::vector<Tensor> attn;
    attention_block(tape.constant(random_tensor({1, 8}, rng)), block_vars(tape, store, "b.block0."), 2, 0.0,
                    nullptr, &attn);
    REQUIRE(attn.size() == 2);
    for (const auto& a : attn) CHECK(a == Tensor({1, 1}, 1.0));
  }

  SUBCASE("attention rows sum to one") {
    Tape tape;
    std::vector<Tensor> attn;
    attention_block(tape.constant(random_tensor({6, 8}, rng)), block_vars(tape, store, "b.block0."), 2, 0.0,
                    nullptr, &attn);
    for (const auto& a : attn)
      for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 6; ++c) s += a.at(r, c);
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
  }

  SUBCASE("zero residual branches are the identity") {
    for (const char* n : {"attn.proj.weight", "attn.proj.bias", "mlp.fc2.weight", "mlp.fc2.bias"})
      store.at(std::string("b.block0.") + n).value.fill(0.0);
    Tape tape;
    Tensor x = random_tensor({5, 8}, rng);
    CHECK(attention_block(tape.constant(x), block_vars(tape, store, "b.block0."), 2, 0.0, nullptr).value() == x);
  }

  SUBCASE("permutation equivariance") {
    const Tensor patches = random_tensor({4, 16}, rng);
    const Tensor& w = store.at("b.patch_embed.weight").value;
    const Tensor pos = random_tensor({4, 8}, rng);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor pp({4, 16}), ppos({4, 8});
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 16; ++j) pp.at(i, j) = patches.at(perm[i], j);
      for (std::size_t j = 0; j < 8; ++j) ppos.at(i, j) = pos.at(perm[i], j);
    }
    Tape tape;
    const BlockVars bv = block_vars(tape, store, "b.block0.");
    Tensor out = attention_block(embed(tape.constant(patches), tape.constant(w), tape.constant(pos)), bv, 2, 0.0,
                                 nullptr).value();
    Tensor pout = attention_block(embed(tape.constant(pp), tape.constant(w), tape.constant(ppos)), bv, 2, 0.0,
                                  nullptr).value();
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 8; ++j) CHECK(pout.at(i, j) == doctest::Approx(out.at(perm[i], j)).epsilon(1e-12));
  }

  SUBCASE("indivisible heads") {
    Tape tape;
    CHECK_THROWS_AS(attention_block(tape.constant(random_tensor({2, 8}, rng)), block_vars(tape, store, "b.block0."),
                                    3, 0.0, nullptr),
                    ShapeError);
  }
}

TEST_CASE("encode") {
  std::mt19937_64 rng(4);
  ViTConfig cfg;
  cfg.patch = 4;
  cfg.embed_dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.view_height = 8;
  cfg.view_width = 12;
  ParamStore store;
  VitBranch branch(store, "vit_mid", cfg, rng);
  CHECK(store.find("vit_mid.block1.mlp.fc2.weight").has_value());
  CHECK(store.at("vit_mid.pos_embed").value.shape() == Shape{6, 8});
  const Image view = random_image(8, 12, rng);

  SUBCASE("shape and determinism") {
    Tape t1, t2;
    Tensor a = branch.encode(t1, store, view, nullptr).value();
    Tensor b = branch.encode(t2, store, view, nullptr).value();
    CHECK(a.shape() == Shape{1, 8});
    CHECK(a == b);
    Tape t3;
    CHECK_THROWS_AS(branch.encode(t3, store, Image(8, 8), nullptr), ShapeError);
  }

  SUBCASE("dropout streams are reproducible") {
    ViTConfig dcfg = cfg;
    dcfg.dropout = 0.3;
    ParamStore ds;
    VitBranch db(ds, "d", dcfg, rng);
    randomize_params(ds, rng);
    std::mt19937_64 r1(9), r2(9);
    Tape t1, t2, t3;
    Tensor a = db.encode(t1, ds, view, &r1).value();
    CHECK(a == db.encode(t2, ds, view, &r2).value());
    CHECK(a != db.encode(t3, ds, view, nullptr).value());
  }

  SUBCASE("collapsed blocks give the mean embedded patch") {
    randomize_params(store, rng);
    for (auto& p : store)
      if (p.name.find(".block") != std::string::npos || p.name.ends_with("pos_embed")) p.value.fill(0.0);
    for (auto& p : store)
      if (p.name.ends_with("gamma")) p.value.fill(1.0);
    Tape tape;
    Tensor f = branch.encode(tape, store, view, nullptr).value();
    Tensor patches = patchify(view, 4);
    const Tensor& w = store.at("vit_mid.patch_embed.weight").value;
    for (std::size_t j = 0; j < 8; ++j) {
      double m = 0.0;
      for (std::size_t n = 0; n < 6; ++n)
        for (std::size_t k = 0; k < 16; ++k) m += patches.at(n, k) * w.at(k, j);
      CHECK(f[j] == doctest::Approx(m / 6.0).epsilon(1e-12));
    }
  }

  SUBCASE("init follows the documented scheme") {
    for (const auto& p : store) {
      if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) {
        CHECK(std::all_of(p.value.values().begin(), p.value.values().end(), [](double v) { return v == 0.0; }));
      }
      if (p.name.ends_with(".gamma")) CHECK(p.value == Tensor(p.value.shape(), 1.0));
      if (p.name.starts_with("vit_mid.block1.") &&
          (p.name.ends_with("proj.weight") || p.name.ends_with("fc2.weight"))) {
        CHECK(p.value == Tensor(p.value.shape(), 0.0));
      }
      if (p.name.ends_with("qkv.weight")) {
        for (double v : p.value.values()) CHECK(std::abs(v) <= 0.04);
      }
    }
  }
}

TEST_CASE("encode gradient matches finite differences") {
  std::mt19937_64 rng(5);
  ViTConfig cfg;
  cfg.patch = 4;
  cfg.embed_dim = 8;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.dropout = 0.0;
  cfg.view_height = 8;
  cfg.view_width = 8;
  ParamStore store;
  VitBranch branch(store, "vit_left", cfg, rng);
  randomize_params(store, rng);
  const Image view = random_image(8, 8, rng);
  auto r = grad_check_params(store, [&](Tape& t) { return ops::mean(branch.encode(t, store, view, nullptr)); });
  CHECK(r.coordinates == store.element_count());
  INFO("worst " << r.worst_param << "[" << r.worst_index << "]");
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("fusion head") {
  std::mt19937_64 rng(6);
  const ModelConfig cfg = tiny_config();
  VtDtsn model(cfg, 1);
  const std::size_t d = 8, df = 16;
  CHECK(model.fusion_param_count() == 3 * d * df + df + df * d + d);

  Tape tape;
  Var l = tape.constant(random_tensor({1, d}, rng)), m = tape.constant(random_tensor({1, d}, rng)),
      r = tape.constant(random_tensor({1, d}, rng));
  auto bind = [&](ParamStore& s) {
    return FusionVars{tape.param(s.at("fusion.fc1.weight")), tape.param(s.at("fusion.fc1.bias")),
                      tape.param(s.at("fusion.fc2.weight")), tape.param(s.at("fusion.fc2.bias"))};
  };
  randomize_params(model.params(), rng);
  const Tensor a = fuse(l, m, r, bind(model.params())).value();
  CHECK(a.shape() == Shape{1, d});
  CHECK(a != fuse(r, m, l, bind(model.params())).value());
  CHECK_THROWS_AS(fuse(l, m, tape.constant(Tensor({1, d + 1})), bind(model.params())), ShapeError);

  ParamStore zeros = model.params();
  for (auto& p : zeros) p.value.fill(0.0);
  CHECK(fuse(l, m, r, bind(zeros)).value() == Tensor({1, d}, 0.0));
  CHECK(ops::concat_cols({l, m, r}).value().size() == 3 * d);
}

TEST_CASE("decoder geometry") {
  FusionConfig f;
  f.seed_height = 7;
  f.seed_width = 7;
  CHECK(decoder_stages(f, 224, 224) == 5);
  f.decoder_channels = 32;
  CHECK(decoder_channel_schedule(f, 5) == std::vector<std::size_t>{32, 16, 8, 4, 2, 1});
  CHECK_THROWS_AS(decoder_stages(f, 224, 112), ConfigError);
  CHECK_THROWS_AS(decoder_stages(f, 210, 210), ConfigError);
  CHECK_THROWS_AS(decoder_stages(f, 7, 7), ConfigError);

  std::mt19937_64 rng(7);
  f.decoder_channels = 2;
  Tape tape;
  DecoderVars dv{tape.constant(random_tensor({4, 2 * 49}, rng)), tape.constant(random_tensor({2 * 49}, rng)), {}, {}};
  const auto ch = decoder_channel_schedule(f, 5);
  for (std::size_t s = 0; s < 5; ++s) {
    dv.conv_weight.push_back(tape.constant(random_tensor({4 * ch[s + 1], ch[s], 3, 3}, rng)));
    dv.conv_bias.push_back(tape.constant(random_tensor({4 * ch[s + 1]}, rng)));
  }
  Tensor out = reconstruct(tape.constant(random_tensor({1, 4}, rng, -50, 50)), dv, f, 224, 224).value();
  CHECK(out.shape() == Shape{224, 224});
  CHECK(std::all_of(out.values().begin(), out.values().end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
}

TEST_CASE("full model forward") {
  std::mt19937_64 rng(8);
  const ModelConfig cfg = tiny_config();
  VtDtsn model(cfg, 11);
  const Image slice = random_image(32, 32, rng);

  const Image a = model.predict(slice), b = model.predict(slice);
  CHECK(a == b);
  CHECK(a.height == 32);
  CHECK(std::all_of(a.pixels.begin(), a.pixels.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
  CHECK_THROWS_AS(model.predict(Image(16, 16)), ShapeError);
  CHECK(VtDtsn(cfg, 11).params().at("fusion.fc1.weight").value == model.params().at("fusion.fc1.weight").value);

  SUBCASE("every parameter receives a finite gradient") {
    randomize_params(model.params(), rng, 0.2);
    model.params().zero_grad();
    Tape tape;
    const Tensor target = tensor_from_image(random_image(32, 32, rng));
    tape.backward(composite_loss(model.forward(tape, slice), target, LossWeights{}, SsimConstants{}));
    for (const auto& p : model.params()) {
      bool finite = std::all_of(p.grad.values().begin(), p.grad.values().end(), [](double v) { return std::isfinite(v); });
      bool nonzero = std::any_of(p.grad.values().begin(), p.grad.values().end(), [](double v) { return v != 0.0; });
      INFO(p.name);
      CHECK(finite);
      CHECK(nonzero);
    }
  }

  SUBCASE("each branch influences the output") {
    randomize_params(model.params(), rng, 0.2);
    const Image full = model.predict(slice);
    for (std::size_t b = 0; b < 3; ++b) {
      ForwardOptions o;
      o.branches[b] = false;
      const Image ablated = model.predict(slice, o);
      double change = 0.0;
      for (std::size_t i = 0; i < full.size(); ++i) change += std::abs(full.pixels[i] - ablated.pixels[i]);
      CHECK(change / full.size() > 0.0);
    }
  }

  SUBCASE("feature vector has three branch blocks") {
    CHECK(model.feature_vector(slice).size() == 24);
  }
}

TEST_CASE("composite loss gradient through the full model") {
  std::mt19937_64 rng(9);
  VtDtsn model(tiny_config(), 3);
  randomize_params(model.params(), rng, 0.3);
  const Image slice = random_image(32, 32, rng);
  const Tensor target = tensor_from_image(random_image(32, 32, rng));
  // Loss values are O(1), so the central difference at eps = 1e-5 carries
  // rounding noise near 1e-10; gradients below 1e-6 are compared absolutely.
  auto r = grad_check_params(
      model.params(),
      [&](Tape& t) { return composite_loss(model.forward(t, slice), target, LossWeights{}, SsimConstants{}); },
      1e-5, 1e-6);
  CHECK(r.resolved > r.coordinates * 8 / 10);
  INFO("worst " << r.worst_param << "[" << r.worst_index << "] analytic " << r.analytic << " numeric " << r.numeric);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("model config serialization") {
  ModelConfig c = tiny_config();
  c.fusion.decoder_activation = Activation::relu;
  const ModelConfig back = model_config_from_json(nlohmann::json::parse(model_config_to_json(c).dump()));
  CHECK(model_config_differences(c, back).empty());
  ModelConfig other = c;
  other.vit.heads = 4;
  other.image_width = 64;
  other.fusion.seed_width = 8;
  auto diff = model_config_differences(c, other);
  std::sort(diff.begin(), diff.end());
  CHECK(diff == std::vector<std::string>{"fusion.seed_width", "image_width", "vit.heads"});
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"image_height", 3}}), ConfigError);
  ModelConfig bad = c;
  bad.vit.heads = 3;
  CHECK_THROWS_AS(VtDtsn(bad, 1), ConfigError);
}

TEST_CASE("branch loading from a donor archive") {
  VtDtsn model(tiny_config(), 1), donor(tiny_config(), 2);
  auto entries = entries_from_store(donor.params(), DType::f64);
  for (auto& e : entries)
    if (e.name.starts_with("vit_right.")) e.name = "backbone." + e.name.substr(10);
  model.load_branch(entries, Branch::mid, "backbone.");
  CHECK(model.params().at("vit_mid.block0.attn.qkv.weight").value ==
        donor.params().at("vit_right.block0.attn.qkv.weight").value);
  CHECK(model.params().at("vit_left.pos_embed").value != donor.params().at("vit_left.pos_embed").value);

  auto broken = entries;
  broken.erase(std::find_if(broken.begin(), broken.end(), [](auto& e) { return e.name == "backbone.pos_embed"; }));
  broken.push_back(WeightEntry{"backbone.cls_token", DType::f32, Tensor({1, 8})});
  try {
    model.load_branch(broken, Branch::left, "backbone.");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing (1): backbone.pos_embed") != std::string::npos);
    CHECK(msg.find("extra (1): backbone.cls_token") != std::string::npos);
  }
}
