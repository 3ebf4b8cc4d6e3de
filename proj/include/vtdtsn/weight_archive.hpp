#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vtdtsn/param_store.hpp"

namespace vtdtsn {

// VTW1 layout, all fields little-endian:
//   "VTW1" | u16 version (1) | u16 reserved (0) | u32 entry count
//   manifest, per entry: u16 name length | name bytes | u8 dtype | u8 rank | u32 dims[rank]
//   payload: raw blobs in manifest order (f32: 4 bytes/value, f64: 8 bytes/value)
enum class DType : std::uint8_t { f32 = 1, f64 = 2, i8 = 3 };

std::string_view dtype_name(DType t);
std::size_t dtype_size(DType t);

struct WeightEntry {
  std::string name;
  DType dtype = DType::f32;
  Tensor values;
};

std::string encode_weights(const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> decode_weights(std::string_view bytes);

void save_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> load_weights(const std::filesystem::path& path);

// Bytes taken by the blobs alone, excluding header and manifest.
std::size_t payload_bytes(const std::vector<WeightEntry>& entries);

std::vector<WeightEntry> entries_from_store(const ParamStore& store, DType dtype = DType::f32,
                                            std::string_view prefix = "");

// Copies archive values into `store`. Names must match exactly in both
// directions; otherwise LoadError lists the missing and extra entries.
// Entries starting with `prefix` are considered, with the prefix stripped.
void load_into(ParamStore& store, const std::vector<WeightEntry>& entries,
               std::string_view prefix = "");

}  // namespace vtdtsn
