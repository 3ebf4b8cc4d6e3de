#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/dataset.hpp"
#include "vtdtsn/errors.hpp"
#include "vtdtsn/filters.hpp"
#include "vtdtsn/split.hpp"
#include "vtdtsn/synthetic.hpp"
#include "vtdtsn/views.hpp"

using namespace vtdtsn;

namespace {

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  Image img(h, w);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

GeneratorConfig small_generator() {
  GeneratorConfig g;
  g.replicates = 3;
  g.depth = 6;
  g.height = 20;
  g.width = 24;
  g.cells = 4;
  return g;
}

}  // namespace

TEST_CASE("median_filter3") {
  Image c(5, 6, 0.7);
  CHECK(median_filter3(c) == c);

  Image hot(7, 7, 0.0);
  hot.at(3, 3) = 1.0;
  auto m = median_filter3(hot);
  for (double v : m.pixels) CHECK(v == 0.0);

  Image nine(3, 3, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(median_filter3(nine).at(1, 1) == 5.0);
  CHECK_THROWS_AS(median_filter3(Image(2, 5)), ShapeError);
}

TEST_CASE("gaussian_filter") {
  Image c(9, 11, 0.3);
  auto g = gaussian_filter(c, 1.0);
  for (double v : g.pixels) CHECK(std::abs(v - 0.3) < 1e-9);

  CHECK(gaussian_kernel(1.0).size() == 7);
  CHECK_THROWS_AS(gaussian_filter(c, 0.0), ConfigError);
  CHECK_THROWS_AS(gaussian_filter(c, -1.0), ConfigError);

  // Impulse far enough from the border that the kernel support is interior.
  Image impulse(15, 15, 0.0);
  impulse.at(7, 7) = 1.0;
  auto resp = gaussian_filter(impulse, 1.0);
  CHECK(std::abs(std::accumulate(resp.pixels.begin(), resp.pixels.end(), 0.0) - 1.0) < 1e-6);

  // Oracle: direct 2-D convolution with an explicitly built 2-D kernel.
  const double sigma = 1.0;
  std::vector<double> w2(49);
  double total = 0.0;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) total += w2[(i + 3) * 7 + j + 3] = std::exp(-(i * i + j * j) / (2 * sigma * sigma));
  for (auto& v : w2) v /= total;
  for (int r = 0; r < 15; ++r)
    for (int col = 0; col < 15; ++col) {
      double expect = 0.0;
      int dr = r - 7, dc = col - 7;
      if (std::abs(dr) <= 3 && std::abs(dc) <= 3) expect = w2[(dr + 3) * 7 + dc + 3];
      CHECK(std::abs(resp.at(r, col) - expect) < 1e-12);
    }
}

TEST_CASE("minmax_normalize") {
  auto n = minmax_normalize(Image(1, 3, std::vector<double>{2, 4, 6}));
  CHECK(n.pixels == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(minmax_normalize(Image(1, 2, 5.0)).pixels == std::vector<double>{0.0, 0.0});
  Image unit(1, 4, std::vector<double>{0.0, 0.25, 1.0, 0.5});
  CHECK(minmax_normalize(unit) == unit);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto img = random_image(4 + trial % 5, 3 + trial % 7, rng);
    auto out = minmax_normalize(img);
    for (double v : out.pixels) CHECK((v >= 0.0 && v <= 1.0));
    auto argmax = [](const Image& i) { return std::max_element(i.pixels.begin(), i.pixels.end()) - i.pixels.begin(); };
    auto argmin = [](const Image& i) { return std::min_element(i.pixels.begin(), i.pixels.end()) - i.pixels.begin(); };
    CHECK(argmax(out) == argmax(img));
    CHECK(argmin(out) == argmin(img));
  }
}

TEST_CASE("denoising is idempotent on constant images") {
  Image c(16, 16, 2.5);
  PreprocessOptions opt;
  opt.normalize = false;
  auto once = preprocess_slice(c, opt);
  for (double v : once.pixels) CHECK(std::abs(v - 2.5) < 1e-9);
  auto twice = preprocess_slice(once, opt);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::abs(twice.pixels[i] - once.pixels[i]) < 1e-9);
}

TEST_CASE("split_replicates") {
  std::vector<std::uint32_t> eight{1, 2, 3, 4, 5, 6, 7, 8};
  auto s = split_replicates(eight, {}, 5);
  CHECK(s.train.size() == 6);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 1);
  CHECK(split_replicates(eight, {}, 5) == s);

  std::vector<std::uint32_t> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 0u);
  auto h = split_replicates(hundred, {}, 1);
  CHECK(h.train.size() == 70);
  CHECK(h.validation.size() == 15);
  CHECK(h.test.size() == 15);

  CHECK_THROWS_AS(split_replicates({1, 2}, {}, 0), ConfigError);
  CHECK_THROWS_AS(split_replicates({1, 2, 3}, SplitRatios{0.5, 0.2, 0.2}, 0), ConfigError);
}

TEST_CASE("split_replicates is a disjoint cover for random replicate sets") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 48;
    std::set<std::uint32_t> ids;
    while (ids.size() < n) ids.insert(static_cast<std::uint32_t>(rng() % 10000));
    auto s = split_replicates({ids.begin(), ids.end()}, {}, rng());
    std::set<std::uint32_t> all;
    for (auto* part : {&s.train, &s.validation, &s.test}) {
      CHECK(!part->empty());
      for (auto id : *part) CHECK(all.insert(id).second);
    }
    CHECK(all == ids);
  }
}

TEST_CASE("make_views") {
  SUBCASE("512 columns") {
    auto v = make_views(Image(20, 512, 0.0));
    CHECK(v.crop_width == 358);
    CHECK(v.crop_offsets == std::array<std::size_t, 3>{0, 77, 154});
  }
  SUBCASE("full-width crops are identical") {
    std::mt19937_64 rng(13);
    auto img = random_image(4, 10, rng);
    auto v = make_views(img, 1.0);
    CHECK(v.left == img);
    CHECK(v.mid == img);
    CHECK(v.right == img);
  }
  SUBCASE("narrow slices are rejected") {
    CHECK_THROWS_AS(make_views(Image(20, 20, 0.0), 0.7), ShapeError);
    CHECK_THROWS_AS(make_views(Image(20, 64, 0.0), 0.0), ConfigError);
  }
  SUBCASE("crops are copies and cover every column") {
    std::mt19937_64 rng(14);
    for (std::size_t w = 24; w < 140; w += 7) {
      for (double f : {0.5, 0.6, 0.7, 0.85, 1.0}) {
        if (std::llround(f * w) < 16) continue;
        auto img = random_image(5, w, rng);
        auto v = make_views(img, f);
        if (v.crop_width + 2 <= w) {
          CHECK(v.crop_offsets[0] < v.crop_offsets[1]);
          CHECK(v.crop_offsets[1] < v.crop_offsets[2]);
        }
        std::vector<int> covered(w, 0);
        for (auto off : v.crop_offsets)
          for (std::size_t c = 0; c < v.crop_width; ++c) covered[off + c] = 1;
        CHECK(std::count(covered.begin(), covered.end(), 1) == static_cast<long>(w));
        CHECK(reassemble_views(v, w) == img);
      }
    }
  }
}

TEST_CASE("resize_bilinear") {
  std::mt19937_64 rng(15);
  auto img = random_image(6, 9, rng);
  CHECK(resize_bilinear(img, 6, 9) == img);
  auto c = resize_bilinear(Image(7, 5, 0.4), 16, 16);
  for (double v : c.pixels) CHECK(std::abs(v - 0.4) < 1e-12);
  auto up = resize_bilinear(img, 13, 4);
  CHECK(up.height == 13);
  CHECK(up.width == 4);
}

TEST_CASE("synthetic generator") {
  auto cfg = small_generator();

  SUBCASE("determinism") {
    CHECK(generate_synthetic_stack(cfg, 1, 0, 77) == generate_synthetic_stack(cfg, 1, 0, 77));
    CHECK(!(generate_synthetic_stack(cfg, 1, 0, 77) == generate_synthetic_stack(cfg, 1, 0, 78)));
  }
  SUBCASE("noise-free single cell peaks at its center") {
    cfg.noise = 0.0;
    cfg.cells = 1;
    cfg.cell_growth = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto cell = synthetic_cells(cfg, 0, seed).at(0);
      auto v = generate_synthetic_stack(cfg, 1, 0, seed);
      auto s = v.slice(0);
      auto it = std::max_element(s.pixels.begin(), s.pixels.end());
      auto idx = static_cast<std::size_t>(it - s.pixels.begin());
      CHECK(idx == cell.row * cfg.width + cell.col);
    }
  }
  SUBCASE("noise-free mean intensity does not increase with depth") {
    cfg.noise = 0.0;
    auto v = generate_synthetic_stack(cfg, 2, 1, 5);
    double prev = 1e300;
    for (std::size_t z = 0; z < v.depth; ++z) {
      auto s = v.slice(z);
      double mean = std::accumulate(s.pixels.begin(), s.pixels.end(), 0.0) / s.size();
      CHECK(mean <= prev);
      prev = mean;
    }
  }
  SUBCASE("per-slice SNR does not increase with depth") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto cells = synthetic_cells(cfg, 2, seed);
      double prev = 1e300;
      for (std::size_t z = 0; z < cfg.depth; ++z) {
        auto s = synthetic_signal(cfg, cells, z);
        double power = 0.0;
        for (double p : s.pixels) power += p * p;
        power /= s.size();
        const double snr = power / std::pow(noise_std_at(cfg, z), 2);
        CHECK(snr <= prev);
        prev = snr;
      }
    }
  }
  SUBCASE("labels match the volume and use four classes") {
    auto v = generate_synthetic_stack(cfg, 1, 2, 9);
    REQUIRE(v.labels.has_value());
    CHECK(v.labels->size() == v.voxels.size());
    for (auto l : *v.labels) CHECK(l <= 3);
  }
  SUBCASE("default dataset layout") {
    GeneratorConfig d;
    d.height = d.width = 16;
    auto vols = generate_dataset(d, 3);
    CHECK(vols.size() == 24);
    std::size_t slices = 0;
    for (const auto& v : vols) slices += v.depth;
    CHECK(slices == 432);
  }
}

TEST_CASE("VST1 round trip and errors") {
  auto v = generate_synthetic_stack(small_generator(), 4, 1, 21);
  const auto bytes = encode_volume(v);
  CHECK(bytes.substr(0, 4) == "VST1");
  CHECK(decode_volume(bytes) == v);
  CHECK(encode_volume(decode_volume(bytes)) == bytes);

  auto no_labels = v;
  no_labels.labels.reset();
  CHECK(decode_volume(encode_volume(no_labels)) == no_labels);

  std::string bad = bytes;
  bad[1] = 'Q';
  CHECK_THROWS_AS(decode_volume(bad), FormatError);
  CHECK_THROWS_AS(decode_volume(bytes.substr(0, bytes.size() - 10)), FormatError);

  // Header claims a larger depth than the payload holds.
  std::string big = bytes;
  big[14] = static_cast<char>(200);
  try {
    decode_volume(big);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  auto dir = std::filesystem::temp_directory_path() / "vtdtsn_vst_test";
  std::filesystem::create_directories(dir);
  save_volume(v, dir / volume_file_name(v.replicate_id, v.timepoint_days));
  CHECK(load_volume(dir / "rep04_t08.vst") == v);
  std::filesystem::remove_all(dir);
}

TEST_CASE("build_samples ordering and target modes") {
  auto cfg = small_generator();
  auto vols = generate_dataset(cfg, 8);
  auto ids = replicate_ids(vols);
  CHECK(ids == std::vector<std::uint32_t>{1, 2, 3});

  auto samples = build_samples(vols, {3, 1}, {}, TargetMode::identity);
  CHECK(samples.size() == 2 * 3 * cfg.depth);
  CHECK(samples.front().replicate_id == 1);
  CHECK(samples.back().replicate_id == 3);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    auto key = [](const SliceSample& s) { return std::tuple(s.replicate_id, s.timepoint_days, s.z); };
    CHECK(key(samples[i - 1]) < key(samples[i]));
  }
  for (const auto& s : samples) {
    CHECK(s.input == s.target);
    for (double p : s.input.pixels) CHECK((p >= 0.0 && p <= 1.0));
  }

  auto next = build_samples(vols, {2}, {}, TargetMode::next_timepoint);
  CHECK(next.size() == 2 * cfg.depth);
  CHECK(next.front().timepoint_days == 4);
  CHECK(next.back().timepoint_days == 8);
  CHECK(!(next.front().input == next.front().target));
}
