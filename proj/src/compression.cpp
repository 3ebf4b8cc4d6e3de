#include "vtdtsn/compression.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/errors.hpp"

namespace vtdtsn {

void PruneMask::apply(ParamStore& store) const {
  if (keep.size() != store.size()) throw ShapeError("prune mask does not match the parameter store");
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& v = store[i].value.values();
    if (keep[i].size() != v.size()) throw ShapeError("prune mask does not match '" + store[i].name + "'");
    for (std::size_t j = 0; j < v.size(); ++j)
      if (!keep[i][j]) v[j] = 0.0;
  }
}

double PruneMask::achieved_sparsity() const {
  return prunable ? static_cast<double>(pruned) / static_cast<double>(prunable) : 0.0;
}

PruneMask magnitude_prune(ParamStore& store, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in [0,1)");
  PruneMask mask;
  mask.target_sparsity = sparsity;
  struct Slot {
    double mag;
    std::size_t param, index;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    mask.keep.emplace_back(p.value.size(), 1);
    if (!is_prunable(p.name)) continue;
    for (std::size_t j = 0; j < p.value.size(); ++j) slots.push_back({std::abs(p.value[j]), i, j});
  }
  mask.prunable = slots.size();
  const auto k = static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(slots.size())));
  if (k > 0) {
    auto less = [](const Slot& a, const Slot& b) {
      if (a.mag != b.mag) return a.mag < b.mag;
      return a.param != b.param ? a.param < b.param : a.index < b.index;
    };
    std::nth_element(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(k - 1), slots.end(), less);
    for (std::size_t s = 0; s < k; ++s) mask.keep[slots[s].param][slots[s].index] = 0;
  }
  mask.pruned = k;
  mask.apply(store);
  return mask;
}

QuantTensor quantize_int8(const Tensor& x) {
  QuantTensor out;
  out.shape = x.shape();
  out.q.resize(x.size());
  const auto& v = x.values();
  if (v.empty()) return out;
  for (double e : v)
    if (!std::isfinite(e)) throw NumericalError("quantize_int8: non-finite value");
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  if (lo == hi) {
    out.scale = lo != 0.0 ? std::abs(lo) : 1e-8;
    out.zero_point = 0;
    const std::int8_t code = lo > 0.0 ? 1 : (lo < 0.0 ? -1 : 0);
    std::fill(out.q.begin(), out.q.end(), code);
    return out;
  }
  const double mn = std::min(lo, 0.0), mx = std::max(hi, 0.0);
  out.scale = std::max((mx - mn) / 255.0, 1e-8);
  out.zero_point = static_cast<std::int32_t>(std::clamp(std::round(-mn / out.scale) - 128.0, -128.0, 127.0));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = std::round(v[i] / out.scale) + out.zero_point;
    out.q[i] = static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
  }
  return out;
}

Tensor dequantize(const QuantTensor& q) {
  Tensor out(q.shape);
  if (out.size() != q.q.size()) throw ShapeError("dequantize: code count does not match shape " + shape_string(q.shape));
  for (std::size_t i = 0; i < q.q.size(); ++i)
    out[i] = static_cast<double>(static_cast<std::int32_t>(q.q[i]) - q.zero_point) * q.scale;
  return out;
}

QuantizedModel quantize_model(const VtDtsn& model) {
  QuantizedModel qm;
  qm.config = model.config();
  for (const auto& p : model.params()) qm.entries.push_back(QuantEntry{p.name, quantize_int8(p.value)});
  return qm;
}

VtDtsn dequantize_model(const QuantizedModel& qm) {
  VtDtsn model(qm.config, 0);
  std::unordered_map<std::string, const QuantEntry*> by_name;
  for (const auto& e : qm.entries) by_name[e.name] = &e;
  std::vector<std::string> missing;
  for (auto& p : model.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      missing.push_back(p.name);
      continue;
    }
    Tensor t = dequantize(it->second->tensor);
    if (t.shape() != p.value.shape()) {
      throw ConfigError("quantized weight '" + p.name + "' has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(p.value.shape()));
    }
    p.value = std::move(t);
  }
  if (!missing.empty()) {
    std::string msg = "quantized model lacks " + std::to_string(missing.size()) + " weight(s):";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
  return model;
}

Image quantized_forward(const QuantizedModel& qm, const Image& input) { return dequantize_model(qm).predict(input); }

namespace {
constexpr std::string_view kQuantMagic = "VTQ1";
constexpr std::uint16_t kQuantVersion = 1;
}  // namespace

std::string encode_quantized(const std::vector<QuantEntry>& entries) {
  ByteWriter w;
  w.bytes(kQuantMagic);
  w.u16(kQuantVersion);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("parameter name too long");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(DType::i8));
    w.u8(static_cast<std::uint8_t>(e.tensor.shape.size()));
    for (auto d : e.tensor.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f64(e.tensor.scale);
    w.i32(e.tensor.zero_point);
  }
  for (const auto& e : entries)
    for (std::int8_t q : e.tensor.q) w.u8(static_cast<std::uint8_t>(q));
  return w.take();
}

std::vector<QuantEntry> decode_quantized(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kQuantMagic) throw FormatError("bad magic at offset 0: expected VTQ1");
  const auto version = r.u16("version");
  if (version != kQuantVersion) throw FormatError("unsupported VTQ1 version " + std::to_string(version) + " at offset 4");
  r.u16("reserved");
  const auto count = r.u32("entry count");
  std::vector<QuantEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    QuantEntry e;
    const auto len = r.u16("name length");
    e.name = std::string(r.bytes(len, "name"));
    const auto dtype_off = r.offset();
    if (r.u8("dtype") != static_cast<std::uint8_t>(DType::i8)) {
      throw FormatError("VTQ1 entry '" + e.name + "' is not int8 at offset " + std::to_string(dtype_off));
    }
    const auto rank = r.u8("rank");
    if (rank == 0) throw FormatError("zero rank for '" + e.name + "' at offset " + std::to_string(r.offset() - 1));
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto off = r.offset();
      const auto d = r.u32("dimension");
      if (d == 0) throw FormatError("zero dimension at offset " + std::to_string(off));
      e.tensor.shape.push_back(d);
    }
    const auto scale_off = r.offset();
    e.tensor.scale = r.f64("scale");
    if (!(e.tensor.scale > 0.0) || !std::isfinite(e.tensor.scale)) {
      throw FormatError("non-positive scale for '" + e.name + "' at offset " + std::to_string(scale_off));
    }
    const auto zp_off = r.offset();
    e.tensor.zero_point = r.i32("zero point");
    if (e.tensor.zero_point < -128 || e.tensor.zero_point > 127) {
      throw FormatError("zero point out of int8 range for '" + e.name + "' at offset " + std::to_string(zp_off));
    }
    out.push_back(std::move(e));
  }
  for (auto& e : out) {
    std::size_t n = 1;
    for (auto d : e.tensor.shape) {
      if (n > std::numeric_limits<std::size_t>::max() / d) throw FormatError("dimension overflow for '" + e.name + "'");
      n *= d;
    }
    if (n > r.remaining()) {
      throw FormatError("truncated payload for '" + e.name + "' at offset " + std::to_string(r.offset()));
    }
    const auto raw = r.bytes(n, "payload");
    e.tensor.q.resize(n);
    for (std::size_t i = 0; i < n; ++i) e.tensor.q[i] = static_cast<std::int8_t>(static_cast<unsigned char>(raw[i]));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after payload at offset " + std::to_string(r.offset()));
  return out;
}

std::size_t quantized_payload_bytes(const std::vector<QuantEntry>& entries) {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.tensor.q.size();
  return n;
}

ArchiveCounts count_archive(const std::vector<WeightEntry>& entries) {
  ArchiveCounts c;
  for (const auto& e : entries) {
    const bool prunable = is_prunable(e.name);
    for (double v : e.values.values()) {
      ++c.params;
      if (v != 0.0) ++c.nonzero;
      if (prunable) {
        ++c.prunable;
        if (v != 0.0) ++c.nonzero_prunable;
      }
    }
  }
  return c;
}

namespace {

struct Timed {
  std::vector<SliceMetrics> rows;
  double seconds_per_slice = 0.0;
};

Timed timed_eval(const VtDtsn& model, const std::vector<SliceSample>& samples) {
  const auto t0 = std::chrono::steady_clock::now();
  Timed t;
  t.rows = evaluate_slices(model, samples, 1);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  t.seconds_per_slice = samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
  return t;
}

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double num_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

nlohmann::json means_json(const MetricMeans& m) {
  return {{"mse", num(m.mse)}, {"ssim", num(m.ssim)}, {"cosine", num(m.cosine)}, {"count", m.count}};
}
MetricMeans means_from(const nlohmann::json& j) {
  MetricMeans m;
  m.mse = num_from(j.at("mse"));
  m.ssim = num_from(j.at("ssim"));
  m.cosine = num_from(j.at("cosine"));
  m.count = j.at("count").get<std::size_t>();
  return m;
}

}  // namespace

CompressionReport compression_report(const VtDtsn& original, const VtDtsn& pruned, const PruneMask& mask,
                                     const QuantizedModel& qm, const std::vector<SliceSample>& samples) {
  CompressionReport r;
  r.target_sparsity = mask.target_sparsity;
  r.achieved_sparsity = mask.achieved_sparsity();
  const auto float_entries = entries_from_store(pruned.params(), DType::f32);
  const auto counts = count_archive(float_entries);
  r.param_count = counts.params;
  r.prunable_count = counts.prunable;
  r.nonzero_count = counts.nonzero;
  r.nonzero_prunable_count = counts.nonzero_prunable;
  r.float_archive_bytes = encode_weights(float_entries).size();
  r.quantized_archive_bytes = encode_quantized(qm.entries).size();
  r.float_payload_bytes = payload_bytes(float_entries);
  r.quantized_payload_bytes = quantized_payload_bytes(qm.entries);
  r.payload_ratio = static_cast<double>(r.quantized_payload_bytes) / static_cast<double>(r.float_payload_bytes);
  r.slices = samples.size();
  if (!samples.empty()) {
    const Timed f = timed_eval(original, samples);
    const Timed p = timed_eval(pruned, samples);
    const VtDtsn deq = dequantize_model(qm);
    const Timed q = timed_eval(deq, samples);
    r.float_metrics = mean_metrics(f.rows);
    r.pruned_metrics = mean_metrics(p.rows);
    r.quantized_metrics = mean_metrics(q.rows);
    r.float_seconds_per_slice = f.seconds_per_slice;
    r.quantized_seconds_per_slice = q.seconds_per_slice;
  }
  return r;
}

nlohmann::json CompressionReport::to_json() const {
  return {{"target_sparsity", target_sparsity},
          {"achieved_sparsity", achieved_sparsity},
          {"param_count", param_count},
          {"prunable_count", prunable_count},
          {"nonzero_count", nonzero_count},
          {"nonzero_prunable_count", nonzero_prunable_count},
          {"float_archive_bytes", float_archive_bytes},
          {"quantized_archive_bytes", quantized_archive_bytes},
          {"float_payload_bytes", float_payload_bytes},
          {"quantized_payload_bytes", quantized_payload_bytes},
          {"payload_ratio", payload_ratio},
          {"float_seconds_per_slice", float_seconds_per_slice},
          {"quantized_seconds_per_slice", quantized_seconds_per_slice},
          {"slices", slices},
          {"float_metrics", means_json(float_metrics)},
          {"pruned_metrics", means_json(pruned_metrics)},
          {"quantized_metrics", means_json(quantized_metrics)},
          {"delta", {{"mse", num(delta_mse())}, {"ssim", num(delta_ssim())}, {"cosine", num(delta_cosine())}}}};
}

CompressionReport CompressionReport::from_json(const nlohmann::json& j) {
  try {
    CompressionReport r;
    r.target_sparsity = j.at("target_sparsity").get<double>();
    r.achieved_sparsity = j.at("achieved_sparsity").get<double>();
    r.param_count = j.at("param_count").get<std::size_t>();
    r.prunable_count = j.at("prunable_count").get<std::size_t>();
    r.nonzero_count = j.at("nonzero_count").get<std::size_t>();
    r.nonzero_prunable_count = j.at("nonzero_prunable_count").get<std::size_t>();
    r.float_archive_bytes = j.at("float_archive_bytes").get<std::size_t>();
    r.quantized_archive_bytes = j.at("quantized_archive_bytes").get<std::size_t>();
    r.float_payload_bytes = j.at("float_payload_bytes").get<std::size_t>();
    r.quantized_payload_bytes = j.at("quantized_payload_bytes").get<std::size_t>();
    r.payload_ratio = j.at("payload_ratio").get<double>();
    r.float_seconds_per_slice = j.at("float_seconds_per_slice").get<double>();
    r.quantized_seconds_per_slice = j.at("quantized_seconds_per_slice").get<double>();
    r.slices = j.at("slices").get<std::size_t>();
    r.float_metrics = means_from(j.at("float_metrics"));
    r.pruned_metrics = means_from(j.at("pruned_metrics"));
    r.quantized_metrics = means_from(j.at("quantized_metrics"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("compression report: ") + e.what());
  }
}

std::string CompressionReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "key,value\n";
  const nlohmann::json flat = to_json().flatten();
  for (const auto& [key, value] : flat.items()) {
    std::string k = key.substr(1);
    std::replace(k.begin(), k.end(), '/', '.');
    os << k << ',';
    if (value.is_null()) os << "nan";
    else if (value.is_number_float()) os << value.get<double>();
    else os << value.dump();
    os << '\n';
  }
  return os.str();
}

CompressionReport CompressionReport::from_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != "key,value") throw FormatError("compression report CSV: missing header");
  nlohmann::json flat = nlohmann::json::object();
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError("compression report CSV: line " + std::to_string(lineno) + " has no comma");
    }
    std::string key = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    std::replace(key.begin(), key.end(), '.', '/');
    if (value == "nan") {
      flat["/" + key] = nullptr;
      continue;
    }
    try {
      std::size_t used = 0;
      if (value.find_first_of(".eE") == std::string::npos && value.find('-') == std::string::npos) {
        const unsigned long long n = std::stoull(value, &used);
        flat["/" + key] = n;
      } else {
        flat["/" + key] = std::stod(value, &used);
      }
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw FormatError("compression report CSV: bad number '" + value + "' on line " + std::to_string(lineno));
    }
  }
  return from_json(flat.unflatten());
}

}  // namespace vtdtsn
