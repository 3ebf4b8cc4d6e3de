#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtdtsn/image.hpp"

namespace vtdtsn {

// Z x H x W intensity stack of one replicate at one timepoint.
struct Volume {
  std::uint32_t replicate_id = 0;
  std::uint16_t timepoint_days = 0;
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> voxels;                         // z-major, then row-major
  std::optional<std::vector<std::uint8_t>> labels;  // classes 0..3, same layout

  // Micrometers (x, y, z); metadata only, not serialized.
  static constexpr std::array<double, 3> voxel_size{0.625, 0.625, 1.0};

  std::size_t slice_size() const { return height * width; }
  Image slice(std::size_t z) const;
  void validate() const;

  friend bool operator==(const Volume&, const Volume&) = default;
};

// VST1: "VST1" | u16 version | u16 flags (bit0 = labels) | u32 replicate_id |
// u16 timepoint_days | u32 Z | u32 H | u32 W | f32[Z*H*W] | optional u8[Z*H*W].
std::string encode_volume(const Volume& v);
Volume decode_volume(std::string_view bytes);

void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

// Canonical file name, e.g. "rep03_t08.vst".
std::string volume_file_name(std::uint32_t replicate_id, std::uint16_t timepoint_days);

// All *.vst files in `dir`, ordered by (replicate, timepoint).
std::vector<Volume> load_volume_dir(const std::filesystem::path& dir);

}  // namespace vtdtsn
