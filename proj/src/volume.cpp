#include "vtdtsn/volume.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "vtdtsn/binary_io.hpp"
#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

constexpr std::string_view kMagic = "VST1";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagLabels = 1;
// Decoded volumes above this voxel count are rejected as corrupt headers.
constexpr std::uint64_t kMaxVoxels = 1ULL << 34;

}  // namespace

Image Volume::slice(std::size_t z) const {
  if (z >= depth) throw ShapeError("slice index " + std::to_string(z) + " outside depth " + std::to_string(depth));
  Image img(height, width);
  const std::size_t base = z * slice_size();
  for (std::size_t i = 0; i < slice_size(); ++i) img.pixels[i] = voxels[base + i];
  return img;
}

void Volume::validate() const {
  if (depth < 1 || height < 16 || width < 16) {
    throw ShapeError("volume dims " + std::to_string(depth) + "x" + std::to_string(height) + "x" +
                     std::to_string(width) + " violate Z>=1, H>=16, W>=16");
  }
  if (voxels.size() != depth * height * width) throw ShapeError("voxel count does not match dims");
  if (labels && labels->size() != voxels.size()) throw ShapeError("label map does not match volume shape");
}

std::string encode_volume(const Volume& v) {
  v.validate();
  ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u16(v.labels ? kFlagLabels : 0);
  w.u32(v.replicate_id);
  w.u16(v.timepoint_days);
  w.u32(static_cast<std::uint32_t>(v.depth));
  w.u32(static_cast<std::uint32_t>(v.height));
  w.u32(static_cast<std::uint32_t>(v.width));
  for (float f : v.voxels) w.f32(f);
  if (v.labels)
    for (auto l : *v.labels) w.u8(l);
  return w.take();
}

Volume decode_volume(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw FormatError("bad magic at offset 0: expected VST1");
  const auto version = r.u16("version");
  if (version != kVersion) throw FormatError("unsupported VST1 version " + std::to_string(version) + " at offset 4");
  const auto flags = r.u16("flags");
  if (flags & ~kFlagLabels) throw FormatError("unknown flag bits at offset 6");
  Volume v;
  v.replicate_id = r.u32("replicate_id");
  v.timepoint_days = r.u16("timepoint_days");
  const std::size_t dims_offset = r.offset();
  const std::uint64_t z = r.u32("Z"), h = r.u32("H"), w = r.u32("W");
  if (z == 0 || h == 0 || w == 0) throw FormatError("zero dimension at offset " + std::to_string(dims_offset));
  const std::uint64_t n = z * h * w;  // each factor < 2^32, overflow checked below
  if (n / z / h != w || n > kMaxVoxels) {
    throw FormatError("dimension overflow at offset " + std::to_string(dims_offset));
  }
  const std::uint64_t need = n * 4 + ((flags & kFlagLabels) ? n : 0);
  if (r.remaining() < need) {
    throw FormatError("truncated payload at offset " + std::to_string(r.offset()) + ": header declares " +
                      std::to_string(need) + " bytes, " + std::to_string(r.remaining()) + " present");
  }
  v.depth = z;
  v.height = h;
  v.width = w;
  v.voxels.resize(n);
  for (auto& f : v.voxels) f = r.f32("voxel");
  if (flags & kFlagLabels) {
    std::vector<std::uint8_t> labels(n);
    for (auto& l : labels) {
      const auto off = r.offset();
      l = r.u8("label");
      if (l > 3) throw FormatError("label value " + std::to_string(l) + " out of range at offset " + std::to_string(off));
    }
    v.labels = std::move(labels);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes at offset " + std::to_string(r.offset()));
  return v;
}

void save_volume(const Volume& v, const std::filesystem::path& path) { write_file(path, encode_volume(v)); }

Volume load_volume(const std::filesystem::path& path) { return decode_volume(read_file(path)); }

std::string volume_file_name(std::uint32_t replicate_id, std::uint16_t timepoint_days) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "rep%02u_t%02u.vst", replicate_id, static_cast<unsigned>(timepoint_days));
  return buf;
}

std::vector<Volume> load_volume_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw LoadError("data directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".vst") files.push_back(e.path());
  if (files.empty()) throw LoadError("no .vst volumes in '" + dir.string() + "'");
  std::vector<Volume> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_volume(f));
  std::sort(out.begin(), out.end(), [](const Volume& a, const Volume& b) {
    return std::pair(a.replicate_id, a.timepoint_days) < std::pair(b.replicate_id, b.timepoint_days);
  });
  return out;
}

}  // namespace vtdtsn
