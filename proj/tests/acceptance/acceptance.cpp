// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/commands.hpp"
#include "vtdtsn/compression.hpp"
#include "vtdtsn/csv.hpp"
#include "vtdtsn/filters.hpp"
#include "vtdtsn/grad_check.hpp"
#include "vtdtsn/metrics.hpp"
#include "vtdtsn/split.hpp"
#include "vtdtsn/synthetic.hpp"
#include "vtdtsn/training.hpp"
#include "vtdtsn/views.hpp"

using namespace vtdtsn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(h, w);
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

void randomize(ParamStore& store, std::mt19937_64& rng, double std) {
  std::normal_distribution<double> n(0.0, std);
  for (auto& p : store)
    for (auto& v : p.value.values()) v = n(rng);
}

// 1. Composite-loss gradient through the whole model.
Outcome gradient_check() {
  const auto t0 = Clock::now();
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
  std::mt19937_64 rng(101);
  VtDtsn model(c, 11);
  randomize(model.params(), rng, 0.3);
  const Image slice = random_image(32, 32, rng);
  const Tensor target = tensor_from_image(random_image(32, 32, rng));
  const auto r = grad_check_params(
      model.params(), [&](Tape& t) { return composite_loss(model.forward(t, slice), target, LossWeights{}); }, 1e-5,
      1e-6);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = r.max_rel_error < 1e-3 && r.resolved * 10 > r.coordinates * 8 && secs < 60.0;
  o.detail = "max rel err " + fmt("%.2e", r.max_rel_error) + " over " + std::to_string(r.coordinates) +
             " coordinates (" + std::to_string(r.resolved) + " above floor), worst " + r.worst_param + ", " +
             fmt("%.1f s", secs);
  return o;
}

double oracle_mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / a.size();
}

double oracle_ssim(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    cov += (a[i] - ma) * (b[i] - mb);
  }
  va /= n - 1;
  vb /= n - 1;
  cov /= n - 1;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

// 2. Metrics against direct reimplementations.
Outcome metric_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto a = random_image(8, 8, rng).pixels, b = random_image(8, 8, rng).pixels;
    worst = std::max({worst, std::abs(mse(a, b) - oracle_mse(a, b)), std::abs(ssim(a, b) - oracle_ssim(a, b)),
                      std::abs(cosine_similarity(a, b) - oracle_cosine(a, b))});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0, "max abs diff " + fmt("%.2e", worst) + " on 100 pairs, " + fmt("%.3f s", secs)};
}

// 3. Identities over random fixtures.
Outcome metric_identities() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> side(2, 16);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_image(side(rng), side(rng), rng, -1.0, 1.0).pixels;
    std::vector<double> neg(x.size());
    std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
    const LossWeights lw{w(rng), w(rng), w(rng)};
    worst = std::max({worst, std::abs(ssim(x, x) - 1.0), std::abs(cosine_similarity(x, x) - 1.0),
                      std::abs(cosine_similarity(x, neg) + 1.0), std::abs(mse(x, x)),
                      std::abs(composite_loss(x, x, lw))});
  }
  return {worst <= 1e-9, "max deviation " + fmt("%.2e", worst) + " across 1000 fixtures"};
}

ModelConfig overfit_config() {
  ModelConfig c;
  c.image_height = 64;
  c.image_width = 64;
  c.vit.patch = 4;
  c.vit.embed_dim = 16;
  c.vit.depth = 1;
  c.vit.heads = 2;
  c.vit.dropout = 0.0;
  c.vit.view_height = 16;
  c.vit.view_width = 16;
  c.fusion.fused_hidden = 32;
  c.fusion.decoder_channels = 16;
  c.fusion.seed_height = 8;
  c.fusion.seed_width = 8;
  return c;
}

SliceSample overfit_slice() {
  GeneratorConfig g;
  g.depth = 5;
  const Volume v = generate_synthetic_stack(g, 1, 0, 42);
  SliceSample s;
  s.replicate_id = 1;
  s.z = 4;
  s.input = preprocess_slice(v.slice(4));
  s.target = s.input;
  return s;
}

struct Overfit {
  VtDtsn model{overfit_config(), 7};
  SliceSample sample = overfit_slice();
};

// 4. Memorizing one 64x64 slice.
Outcome overfit(Overfit& fx) {
  const auto t0 = Clock::now();
  TrainConfig cfg;
  cfg.micro_batch = 1;
  cfg.accumulation_steps = 1;
  cfg.max_epochs = 500;
  cfg.learning_rate = 3e-3;
  cfg.early_stop_patience = 1000;
  cfg.plateau_patience = 1000;
  cfg.min_delta = 0.0;
  const TrainHistory h = fit(fx.model, {fx.sample}, {}, cfg);
  const Image pred = fx.model.predict(fx.sample.input);
  const double m = mse(fx.sample.target.pixels, pred.pixels), s = ssim(fx.sample.target.pixels, pred.pixels),
               c = cosine_similarity(fx.sample.target.pixels, pred.pixels);
  const double secs = seconds_since(t0);
  std::size_t steps = 0;
  for (const auto& e : h.epochs) steps += e.steps;
  Outcome o;
  o.pass = steps <= 500 && m < 1e-3 && s > 0.95 && c > 0.99 && secs < 300.0;
  o.detail = "mse " + fmt("%.2e", m) + ", ssim " + fmt("%.4f", s) + ", cosine " + fmt("%.4f", c) + " after " +
             std::to_string(steps) + " steps, " + fmt("%.1f s", secs);
  return o;
}

// 5. Accumulating four micro-batches against one joint tape.
Outcome accumulation() {
  ModelConfig mc = overfit_config();
  mc.image_height = mc.image_width = 32;
  mc.fusion.seed_height = mc.fusion.seed_width = 4;
  VtDtsn model(mc, 5);
  std::mt19937_64 rng(505);
  randomize(model.params(), rng, 0.2);
  GeneratorConfig g;
  g.height = g.width = 32;
  g.depth = 8;
  const Volume v = generate_synthetic_stack(g, 1, 0, 3);
  std::vector<SliceSample> samples(8);
  for (std::size_t z = 0; z < 8; ++z) {
    samples[z].z = z;
    samples[z].input = preprocess_slice(v.slice(z));
    samples[z].target = samples[z].input;
  }
  TrainConfig cfg;
  std::vector<std::vector<const SliceSample*>> mbs(4);
  for (std::size_t i = 0; i < 8; ++i) mbs[i / 2].push_back(&samples[i]);
  model.params().zero_grad();
  accumulate_step(model, mbs, cfg, nullptr);
  std::vector<Tensor> acc;
  for (const auto& p : model.params()) acc.push_back(p.grad);

  model.params().zero_grad();
  Tape tape;
  std::vector<Var> losses;
  for (const auto& s : samples) losses.push_back(ops::reshape(sample_loss(tape, model, s, cfg, nullptr), {1, 1}));
  tape.backward(ops::mean(ops::concat_cols(losses)));
  double worst = 0.0;
  std::size_t i = 0;
  for (const auto& p : model.params()) {
    for (std::size_t j = 0; j < p.grad.size(); ++j) worst = std::max(worst, relative_error(acc[i][j], p.grad[j], 1e-12));
    ++i;
  }
  return {worst <= 1e-6, "k=4 vs joint batch of 8: max rel diff " + fmt("%.2e", worst)};
}

// 6. Hand-traced scheduler and stopper sequences.
Outcome traces() {
  bool ok = true;
  PlateauScheduler mono(1e-3, 2, 0.5, 1e-4);
  for (double v : {1.0, 0.9, 0.8}) ok &= mono.step(v) == 1e-3;
  PlateauScheduler flat(1e-3, 2, 0.5, 1e-4);
  std::size_t halved_at = 0;
  for (std::size_t epoch = 1; epoch <= 4 && !halved_at; ++epoch)
    if (flat.step(1.0) == 5e-4) halved_at = epoch;
  ok &= halved_at == 4;
  EarlyStopper stopper(3, 1e-4);
  std::size_t stop_at = 0;
  for (std::size_t epoch = 1; epoch <= 10 && !stop_at; ++epoch)
    if (stopper.step(1.0)) stop_at = epoch;
  ok &= stop_at == 4;
  return {ok, "lr halves at epoch " + std::to_string(halved_at) + ", stop at epoch " + std::to_string(stop_at) +
                  ", monotone losses keep lr"};
}

// 7. Magnitude pruning and a held mask.
Outcome pruning() {
  ModelConfig mc = overfit_config();
  mc.image_height = mc.image_width = 32;
  mc.fusion.seed_height = mc.fusion.seed_width = 4;
  VtDtsn model(mc, 9);
  std::mt19937_64 rng(707);
  randomize(model.params(), rng, 0.2);
  const ParamStore before = model.params();
  const PruneMask mask = magnitude_prune(model.params(), 0.5);
  double max_pruned = 0.0, min_kept = std::numeric_limits<double>::infinity();
  std::size_t prunable = 0, nonzero = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (!is_prunable(before[i].name)) continue;
    for (std::size_t j = 0; j < before[i].value.size(); ++j) {
      ++prunable;
      const double a = std::abs(before[i].value[j]);
      if (mask.keep[i][j]) {
        min_kept = std::min(min_kept, a);
        nonzero += model.params()[i].value[j] != 0.0;
      } else {
        max_pruned = std::max(max_pruned, a);
      }
    }
  }
  const double frac = static_cast<double>(nonzero) / prunable;

  TrainConfig cfg;
  cfg.micro_batch = 1;
  cfg.accumulation_steps = 1;
  cfg.max_epochs = 100;
  cfg.early_stop_patience = 1000;
  FitOptions opts;
  std::size_t leaks = 0, steps = 0;
  opts.after_step = [&](ParamStore& s) {
    mask.apply(s);
    ++steps;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s[i].value.size(); ++j) leaks += !mask.keep[i][j] && s[i].value[j] != 0.0;
  };
  SliceSample s;
  s.input = random_image(32, 32, rng);
  s.target = random_image(32, 32, rng);
  fit(model, {s}, {}, cfg, opts);
  for (std::size_t i = 0; i < model.params().size(); ++i)
    for (std::size_t j = 0; j < model.params()[i].value.size(); ++j)
      leaks += !mask.keep[i][j] && model.params()[i].value[j] != 0.0;

  Outcome o;
  o.pass = std::abs(frac - 0.5) <= 1.0 / prunable && min_kept >= max_pruned && steps == 100 && leaks == 0;
  o.detail = "nonzero fraction " + fmt("%.6f", frac) + " of " + std::to_string(prunable) + ", min kept " +
             fmt("%.3e", min_kept) + " >= max pruned " + fmt("%.3e", max_pruned) + ", " + std::to_string(leaks) +
             " leaks over " + std::to_string(steps) + " steps";
  return o;
}

// 8. int8 round trip, quantized inference and payload size.
Outcome quantization(const Overfit& fx) {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor x({1000000});
  for (auto& v : x.values()) v = n(rng);
  const QuantTensor q = quantize_int8(x);
  const Tensor back = dequantize(q);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  const bool round_trip = worst <= q.scale / 2 * (1 + 1e-12);

  const QuantizedModel qm = quantize_model(fx.model);
  const double s_float = ssim(fx.sample.target.pixels, fx.model.predict(fx.sample.input).pixels);
  const double s_quant = ssim(fx.sample.target.pixels, quantized_forward(qm, fx.sample.input).pixels);
  const std::size_t float_bytes = fx.model.params().element_count() * sizeof(float);
  const double ratio = static_cast<double>(quantized_payload_bytes(qm.entries)) / float_bytes;
  const auto decoded = decode_quantized(encode_quantized(qm.entries));
  const bool archive_ok = quantized_payload_bytes(decoded) == quantized_payload_bytes(qm.entries);

  Outcome o;
  o.pass = round_trip && std::abs(s_quant - s_float) <= 0.05 && std::abs(ratio - 0.25) <= 0.02 && archive_ok;
  o.detail = "max err " + fmt("%.3e", worst) + " vs scale/2 " + fmt("%.3e", q.scale / 2) + ", ssim float " +
             fmt("%.4f", s_float) + " quantized " + fmt("%.4f", s_quant) + ", payload ratio " + fmt("%.4f", ratio);
  return o;
}

int cli(std::vector<std::string> args, std::string* err = nullptr) {
  args.insert(args.begin(), "vtdtsn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, e);
  if (err) *err = e.str();
  return code;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("vtdtsn_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const fs::path kConfigs = fs::path(VTDTSN_SOURCE_DIR) / "configs";

// 9. Two identical smoke runs.
Outcome determinism() {
  const std::string cfg = (kConfigs / "smoke.cfg").string();
  std::vector<fs::path> runs;
  for (const char* name : {"run_a", "run_b"}) {
    const auto d = fresh_dir(name);
    std::string err;
    if (cli({"gen-data", "--config", cfg, "--out", (d / "data").string()}, &err) ||
        cli({"train", "--config", cfg, "--data-dir", (d / "data").string(), "--out", (d / "ck").string()}, &err) ||
        cli({"eval", "--checkpoint", (d / "ck").string(), "--data-dir", (d / "data").string(), "--out",
             (d / "eval.csv").string(), "--split", "all"},
            &err)) {
      return {false, "pipeline failed: " + err};
    }
    runs.push_back(d);
  }
  std::size_t volumes = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(runs[0] / "data")) {
    if (entry.path().extension() != ".vst") continue;
    ++volumes;
    const auto other = runs[1] / "data" / entry.path().filename();
    differing += !fs::exists(other) || read_file(entry.path()) != read_file(other);
  }
  std::size_t csvs = 0;
  for (const char* f : {"eval.csv", "eval_layers.csv", "eval_replicates.csv", "eval_hist.csv"}) {
    ++csvs;
    differing += read_file(runs[0] / f) != read_file(runs[1] / f);
  }
  return {volumes > 0 && differing == 0, std::to_string(volumes) + " volumes and " + std::to_string(csvs) +
                                             " eval CSVs compared, " + std::to_string(differing) + " differ"};
}

// 10. Layer and replicate tables under the default configuration.
Outcome report_shape() {
  const auto d = fresh_dir("default");
  const std::string cfg = (kConfigs / "default.cfg").string();
  std::string text = read_file(kConfigs / "default.cfg");
  const auto pos = text.find("train.max_steps = 0");
  if (pos == std::string::npos) return {false, "default.cfg lacks train.max_steps"};
  text.replace(pos, 19, "train.max_steps = 4");
  write_file(d / "short.cfg", text);
  std::string err;
  if (cli({"gen-data", "--config", cfg, "--out", (d / "data").string()}, &err) ||
      cli({"train", "--config", (d / "short.cfg").string(), "--data-dir", (d / "data").string(), "--out",
           (d / "ck").string()},
          &err) ||
      cli({"eval", "--checkpoint", (d / "ck").string(), "--data-dir", (d / "data").string(), "--config", cfg,
           "--split", "all", "--out", (d / "eval.csv").string()},
          &err) ||
      cli({"report", (d / "eval.csv").string(), "--out", (d / "report.csv").string()}, &err)) {
    return {false, "pipeline failed: " + err};
  }
  const auto layers = parse_csv(read_file(d / "eval_layers.csv")).rows.size();
  const auto reps = parse_csv(read_file(d / "report.csv")).rows.size();
  return {layers == 18 && reps == 8,
          std::to_string(layers) + " layer rows, " + std::to_string(reps) + " replicate rows in the report"};
}

// 11. Splits, views, normalization and synthetic SNR.
Outcome data_properties() {
  std::mt19937_64 rng(1111);
  std::size_t failures = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + rng() % 48;
    std::set<std::uint32_t> ids;
    while (ids.size() < n) ids.insert(static_cast<std::uint32_t>(rng() % 100000));
    const auto s = split_replicates({ids.begin(), ids.end()}, {}, rng());
    std::set<std::uint32_t> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      failures += part->empty();
      for (auto id : *part) failures += !seen.insert(id).second;
    }
    failures += seen != ids;
  }
  for (std::size_t w = 23; w <= 512; w += 17) {
    for (double f : {0.5, 0.7, 0.9, 1.0}) {
      if (std::llround(f * w) < 16) continue;
      const auto v = make_views(Image(3, w, 0.0), f);
      std::vector<char> covered(w, 0);
      for (auto off : v.crop_offsets)
        for (std::size_t c = 0; c < v.crop_width; ++c) covered[off + c] = 1;
      failures += std::count(covered.begin(), covered.end(), 1) != static_cast<long>(w);
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    const Image img = random_image(3 + trial % 9, 3 + trial % 13, rng, -5.0, 7.0);
    const Image out = minmax_normalize(img);
    for (double v : out.pixels) failures += !(v >= 0.0 && v <= 1.0);
    failures += std::max_element(out.pixels.begin(), out.pixels.end()) - out.pixels.begin() !=
                std::max_element(img.pixels.begin(), img.pixels.end()) - img.pixels.begin();
  }
  GeneratorConfig g;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (std::size_t t = 0; t < g.timepoints.size(); ++t) {
      const auto cells = synthetic_cells(g, t, seed);
      double prev = std::numeric_limits<double>::infinity();
      for (std::size_t z = 0; z < g.depth; ++z) {
        const Image s = synthetic_signal(g, cells, z);
        double power = 0.0;
        for (double p : s.pixels) power += p * p;
        const double snr = power / s.size() / std::pow(noise_std_at(g, z), 2);
        failures += snr > prev;
        prev = snr;
      }
    }
  }
  return {failures == 0, std::to_string(failures) + " violations across splits, views, normalization and SNR"};
}

}  // namespace

int main() {
  std::printf("VT-DTSN acceptance\n");
  std::fflush(stdout);
  Overfit fx;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient check", gradient_check},
      {"metric oracles", metric_oracles},
      {"metric identities", metric_identities},
      {"overfit fixture", [&] { return overfit(fx); }},
      {"gradient accumulation", accumulation},
      {"scheduler and stopper traces", traces},
      {"pruning", pruning},
      {"quantization", [&] { return quantization(fx); }},
      {"pipeline determinism", determinism},
      {"report shape", report_shape},
      {"data pipeline properties", data_properties},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %-30s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
