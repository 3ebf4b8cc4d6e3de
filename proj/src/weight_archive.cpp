#include "vtdtsn/weight_archive.hpp"

#include <limits>
#include <set>
#include <sstream>

#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

constexpr std::string_view kMagic = "VTW1";
constexpr std::uint16_t kVersion = 1;

DType parse_dtype(std::uint8_t tag, std::size_t offset) {
  if (tag == static_cast<std::uint8_t>(DType::f32)) return DType::f32;
  if (tag == static_cast<std::uint8_t>(DType::f64)) return DType::f64;
  throw FormatError("unsupported dtype tag " + std::to_string(tag) + " at offset " +
                    std::to_string(offset));
}

}  // namespace

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i8: return "i8";
  }
  return "?";
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i8: return 1;
  }
  return 0;
}

std::string encode_weights(const std::vector<WeightEntry>& entries) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.dtype == DType::i8) throw FormatError("VTW1 stores float tensors only: '" + e.name + "'");
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("parameter name too long: " + e.name.substr(0, 32) + "...");
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u8(static_cast<std::uint8_t>(e.values.rank()));
    for (auto d : e.values.shape()) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& e : entries) {
    for (double v : e.values.values()) {
      if (e.dtype == DType::f32) w.f32(static_cast<float>(v));
      else w.f64(v);
    }
  }
  return w.take();
}

std::vector<WeightEntry> decode_weights(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw FormatError("bad magic at offset 0: expected VTW1");
  const auto version = r.u16("version");
  if (version != kVersion) {
    throw FormatError("unsupported VTW1 version " + std::to_string(version) + " at offset 4");
  }
  r.u16("reserved");
  const auto count = r.u32("entry count");

  struct Pending {
    std::string name;
    DType dtype;
    Shape shape;
  };
  std::vector<Pending> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Pending p;
    const auto len = r.u16("name length");
    p.name = std::string(r.bytes(len, "name"));
    const auto tag_offset = r.offset();
    p.dtype = parse_dtype(r.u8("dtype"), tag_offset);
    const auto rank = r.u8("rank");
    if (rank == 0) throw FormatError("zero rank for '" + p.name + "' at offset " + std::to_string(r.offset() - 1));
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto off = r.offset();
      const auto d = r.u32("dimension");
      if (d == 0) throw FormatError("zero dimension at offset " + std::to_string(off));
      p.shape.push_back(d);
    }
    manifest.push_back(std::move(p));
  }

  std::vector<WeightEntry> out;
  out.reserve(manifest.size());
  for (auto& p : manifest) {
    std::size_t n = 1;
    for (auto d : p.shape) {
      if (n > std::numeric_limits<std::size_t>::max() / d) {
        throw FormatError("dimension overflow for '" + p.name + "' at offset " + std::to_string(r.offset()));
      }
      n *= d;
    }
    if (n > r.remaining() / dtype_size(p.dtype)) {
      throw FormatError("truncated payload for '" + p.name + "' at offset " + std::to_string(r.offset()));
    }
    std::vector<double> values(n);
    for (auto& v : values) v = p.dtype == DType::f32 ? static_cast<double>(r.f32("value")) : r.f64("value");
    out.push_back(WeightEntry{std::move(p.name), p.dtype, Tensor(std::move(p.shape), std::move(values))});
  }
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after payload at offset " + std::to_string(r.offset()));
  }
  return out;
}

void save_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries) {
  write_file(path, encode_weights(entries));
}

std::vector<WeightEntry> load_weights(const std::filesystem::path& path) {
  return decode_weights(read_file(path));
}

std::size_t payload_bytes(const std::vector<WeightEntry>& entries) {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.values.size() * dtype_size(e.dtype);
  return n;
}

std::vector<WeightEntry> entries_from_store(const ParamStore& store, DType dtype,
                                            std::string_view prefix) {
  std::vector<WeightEntry> out;
  out.reserve(store.size());
  for (const auto& p : store) out.push_back(WeightEntry{std::string(prefix) + p.name, dtype, p.value});
  return out;
}

void load_into(ParamStore& store, const std::vector<WeightEntry>& entries, std::string_view prefix) {
  std::set<std::string> present;
  std::vector<std::string> extra;
  std::vector<std::string> bad_shape;
  for (const auto& e : entries) {
    if (e.name.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string name = e.name.substr(prefix.size());
    auto idx = store.find(name);
    if (!idx) {
      extra.push_back(name);
      continue;
    }
    present.insert(name);
    if (store[*idx].value.shape() != e.values.shape()) {
      bad_shape.push_back(name + " " + shape_string(e.values.shape()) + " (expected " +
                          shape_string(store[*idx].value.shape()) + ")");
    }
  }
  std::vector<std::string> missing;
  for (const auto& p : store)
    if (!present.contains(p.name)) missing.push_back(p.name);

  if (!missing.empty() || !extra.empty() || !bad_shape.empty()) {
    std::ostringstream os;
    os << "archive does not match model layout";
    auto list = [&](const char* label, const std::vector<std::string>& v) {
      if (v.empty()) return;
      os << "; " << label << " (" << v.size() << "):";
      for (const auto& s : v) os << ' ' << s;
    };
    list("missing", missing);
    list("extra", extra);
    list("shape mismatch", bad_shape);
    throw LoadError(os.str());
  }
  for (const auto& e : entries) {
    if (e.name.compare(0, prefix.size(), prefix) != 0) continue;
    store.at(e.name.substr(prefix.size())).value = e.values;
  }
}

}  // namespace vtdtsn
