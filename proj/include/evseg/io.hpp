#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evseg/events.hpp"
#include "evseg/geometry.hpp"
#include "evseg/labeler.hpp"

namespace evseg {

// All files share a 16-byte little-endian header: magic "EVMG", version
// byte 1, a kind byte, then kind-specific fields.
//
// Raster files (kind 1): dtype u8, channels u8, width u32, height u32.
// Payload is plane-major, row-major within a plane:
//   f32 (dtype 0)         4 bytes per cell
//   u8 (dtype 1)          1 byte per cell
//   bool-packed (dtype 2) rows padded to whole bytes, LSB-first
//
// Event files (kind 2): record count u64, 2 reserved bytes. Records are 13
// bytes each: t f64, x u16, y u16, p i8 (p in {-1, +1}).

enum class RasterDtype : uint8_t { f32 = 0, u8 = 1, bool_packed = 2 };

struct RasterF32 {
  int channels = 0, width = 0, height = 0;
  std::vector<float> data;

  float& at(int c, int x, int y) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int x, int y) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

struct RasterU8 {
  int channels = 0, width = 0, height = 0;
  std::vector<uint8_t> data;
};

void write_raster(const std::filesystem::path& path, const RasterF32& raster);
void write_raster(const std::filesystem::path& path, const RasterU8& raster);
// Bool rasters are single-channel.
void write_raster_bool(const std::filesystem::path& path, const MaskRaster& raster);

RasterF32 read_raster_f32(const std::filesystem::path& path);
RasterU8 read_raster_u8(const std::filesystem::path& path);
MaskRaster read_raster_bool(const std::filesystem::path& path);

// In-memory parsers; the file functions wrap these.
RasterF32 parse_raster_f32(std::span<const uint8_t> bytes);
RasterU8 parse_raster_u8(std::span<const uint8_t> bytes);
MaskRaster parse_raster_bool(std::span<const uint8_t> bytes);
std::vector<Event> parse_events_binary(std::span<const uint8_t> bytes);

void write_events_binary(const std::filesystem::path& path, std::span<const Event> events);
std::vector<Event> read_events_binary(const std::filesystem::path& path);

// CSV fallback with header line "t,x,y,p".
void write_events_csv(const std::filesystem::path& path, std::span<const Event> events);
std::vector<Event> read_events_csv(const std::filesystem::path& path);

// Picks binary or CSV by file extension (".csv" means CSV).
std::vector<Event> read_events_auto(const std::filesystem::path& path);

// Field containers over the raster format. Flow is a 3-channel f32 raster
// (u, v, valid); depth is 2-channel (z, valid); label masks are 1-channel
// u8 rasters with values {0 background, 1 imo, 255 invalid}.
void save_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField load_flow(const std::filesystem::path& path, double dt);
void save_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap load_depth(const std::filesystem::path& path);
void save_label_raster(const std::filesystem::path& path, const Raster<uint8_t>& label);
Raster<uint8_t> load_label_raster(const std::filesystem::path& path);
void save_volume(const std::filesystem::path& path, const EventVolume& volume);

// Human-readable key-value sidecar blocks (one "key = value" per line).
std::string format_mask_meta(const LabelMask& mask, int slice_index);
std::map<std::string, std::string, std::less<>> parse_key_values(const std::string& text);

}  // namespace evseg
