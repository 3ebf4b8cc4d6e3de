#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtdtsn/evaluation.hpp"
#include "vtdtsn/model.hpp"

namespace vtdtsn {

// keep[i][j] is 1 when element j of parameter i survives. Parameters that
// are not prunable are all ones.
struct PruneMask {
  std::vector<std::vector<std::uint8_t>> keep;
  double target_sparsity = 0.0;
  std::size_t prunable = 0;
  std::size_t pruned = 0;

  // Zeroes masked positions; call after every optimizer update.
  void apply(ParamStore& store) const;
  double achieved_sparsity() const;
};

// Zeroes the round(sparsity * n) smallest-magnitude prunable weights, with
// ties broken by parameter order then index.
PruneMask magnitude_prune(ParamStore& store, double sparsity);

// Per-tensor asymmetric int8 code: x ~ (q - zero_point) * scale.
struct QuantTensor {
  std::vector<std::int8_t> q;
  double scale = 1.0;
  std::int32_t zero_point = 0;
  Shape shape;
};

// The represented range is [min(x,0), max(x,0)] with 255 steps, so zero is
// exact and no value is clamped. Constant tensors are coded with
// scale |c| (or 1e-8 when c = 0) and q = sign(c), which reproduces c exactly.
QuantTensor quantize_int8(const Tensor& x);
Tensor dequantize(const QuantTensor& q);

struct QuantEntry {
  std::string name;
  QuantTensor tensor;
};

struct QuantizedModel {
  ModelConfig config;
  std::vector<QuantEntry> entries;
};

QuantizedModel quantize_model(const VtDtsn& model);
// Float model holding the dequantized weights; ConfigError names any
// parameter the archive lacks.
VtDtsn dequantize_model(const QuantizedModel& qm);
Image quantized_forward(const QuantizedModel& qm, const Image& input);

// VTQ1 layout, little-endian:
//   "VTQ1" | u16 version (1) | u16 reserved | u32 entry count
//   manifest, per entry: u16 name length | name | u8 dtype (3 = i8) | u8 rank | u32 dims[rank]
//                        | f64 scale | i32 zero_point
//   payload: int8 values in manifest order
std::string encode_quantized(const std::vector<QuantEntry>& entries);
std::vector<QuantEntry> decode_quantized(std::string_view bytes);
std::size_t quantized_payload_bytes(const std::vector<QuantEntry>& entries);

struct CompressionReport {
  double target_sparsity = 0.0;
  double achieved_sparsity = 0.0;
  std::size_t param_count = 0;
  std::size_t prunable_count = 0;
  std::size_t nonzero_count = 0;
  std::size_t nonzero_prunable_count = 0;
  std::size_t float_archive_bytes = 0;
  std::size_t quantized_archive_bytes = 0;
  std::size_t float_payload_bytes = 0;
  std::size_t quantized_payload_bytes = 0;
  double payload_ratio = 0.0;
  double float_seconds_per_slice = 0.0;
  double quantized_seconds_per_slice = 0.0;
  std::size_t slices = 0;
  MetricMeans float_metrics;
  MetricMeans pruned_metrics;
  MetricMeans quantized_metrics;

  // quantized minus float-original
  double delta_mse() const { return quantized_metrics.mse - float_metrics.mse; }
  double delta_ssim() const { return quantized_metrics.ssim - float_metrics.ssim; }
  double delta_cosine() const { return quantized_metrics.cosine - float_metrics.cosine; }

  nlohmann::json to_json() const;
  static CompressionReport from_json(const nlohmann::json& j);
  // Two columns, key and value, one row per field.
  std::string to_csv() const;
  static CompressionReport from_csv(std::string_view text);
};

// `original` is the float model, `pruned` the pruned float model and `qm`
// its quantized form. Metrics and timings use `samples` when non-empty.
CompressionReport compression_report(const VtDtsn& original, const VtDtsn& pruned, const PruneMask& mask,
                                     const QuantizedModel& qm, const std::vector<SliceSample>& samples);

// Parameter and nonzero counts of a float archive, recounted from its entries.
struct ArchiveCounts {
  std::size_t params = 0;
  std::size_t nonzero = 0;
  std::size_t prunable = 0;
  std::size_t nonzero_prunable = 0;
};
ArchiveCounts count_archive(const std::vector<WeightEntry>& entries);

}  // namespace vtdtsn
