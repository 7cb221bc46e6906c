#include "evseg/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "evseg/errors.hpp"

namespace evseg {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'M', 'G'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kKindRaster = 1;
constexpr uint8_t kKindEvents = 2;
constexpr size_t kHeaderSize = 16;
constexpr size_t kEventRecordSize = 13;
constexpr uint32_t kMaxDimension = 1u << 20;

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

using Bytes = std::vector<uint8_t>;

void put_u16(Bytes& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(Bytes& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(Bytes& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_f32(Bytes& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}
void put_f64(Bytes& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint16_t get_u16(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint16_t>(b[at] | (b[at + 1] << 8));
}
uint32_t get_u32(std::span<const uint8_t> b, size_t at) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}
uint64_t get_u64(std::span<const uint8_t> b, size_t at) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}
float get_f32(std::span<const uint8_t> b, size_t at) {
  const uint32_t bits = get_u32(b, at);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
double get_f64(std::span<const uint8_t> b, size_t at) {
  const uint64_t bits = get_u64(b, at);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

Bytes header(uint8_t kind) {
  Bytes out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(kind);
  return out;
}

// Validates magic/version/kind and returns the kind-specific tail offset.
void check_header(std::span<const uint8_t> bytes, uint8_t expected_kind) {
  if (bytes.size() < kHeaderSize)
    throw ParseError(ParseError::Kind::truncated, "file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError(ParseError::Kind::bad_magic, "bad magic, not an EVMG file");
  if (bytes[4] != kVersion)
    throw ParseError(ParseError::Kind::bad_version,
                     "unsupported format version " + std::to_string(bytes[4]));
  if (bytes[5] != expected_kind)
    throw ParseError(ParseError::Kind::bad_kind, "unexpected file kind");
}

struct RasterHeader {
  RasterDtype dtype;
  int channels, width, height;
  size_t cells() const {
    return static_cast<size_t>(channels) * width * height;
  }
};

RasterHeader parse_raster_header(std::span<const uint8_t> bytes, RasterDtype want) {
  check_header(bytes, kKindRaster);
  const uint8_t dtype = bytes[6];
  if (dtype > 2)
    throw ParseError(ParseError::Kind::bad_dtype, "unknown raster dtype tag");
  if (dtype != static_cast<uint8_t>(want))
    throw ParseError(ParseError::Kind::bad_dtype, "raster dtype does not match the reader");
  RasterHeader h;
  h.dtype = static_cast<RasterDtype>(dtype);
  h.channels = bytes[7];
  const uint32_t w = get_u32(bytes, 8);
  const uint32_t hgt = get_u32(bytes, 12);
  if (h.channels == 0 || w == 0 || hgt == 0 || w > kMaxDimension || hgt > kMaxDimension)
    throw ParseError(ParseError::Kind::bad_value, "raster dimensions out of range");
  h.width = static_cast<int>(w);
  h.height = static_cast<int>(hgt);
  return h;
}

void check_payload_size(std::span<const uint8_t> bytes, size_t expected) {
  const size_t actual = bytes.size() - kHeaderSize;
  if (actual < expected)
    throw ParseError(ParseError::Kind::truncated, "raster payload truncated");
  if (actual > expected)
    throw ParseError(ParseError::Kind::trailing_data, "trailing bytes after payload");
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::io, "cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw ParseError(ParseError::Kind::io, "read failed on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseError::Kind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError(ParseError::Kind::io, "write failed on " + path.string());
}

void check_raster_fields(int channels, int width, int height, size_t data_size) {
  if (channels < 1 || channels > 255 || width < 1 || height < 1)
    throw std::invalid_argument("write_raster: bad raster dimensions");
  if (data_size != static_cast<size_t>(channels) * width * height)
    throw std::invalid_argument("write_raster: payload size does not match dimensions");
}

}  // namespace

void write_raster(const std::filesystem::path& path, const RasterF32& raster) {
  check_raster_fields(raster.channels, raster.width, raster.height, raster.data.size());
  Bytes out = header(kKindRaster);
  out.push_back(static_cast<uint8_t>(RasterDtype::f32));
  out.push_back(static_cast<uint8_t>(raster.channels));
  put_u32(out, static_cast<uint32_t>(raster.width));
  put_u32(out, static_cast<uint32_t>(raster.height));
  out.reserve(out.size() + raster.data.size() * 4);
  for (float v : raster.data) put_f32(out, v);
  write_file(path, out);
}

void write_raster(const std::filesystem::path& path, const RasterU8& raster) {
  check_raster_fields(raster.channels, raster.width, raster.height, raster.data.size());
  Bytes out = header(kKindRaster);
  out.push_back(static_cast<uint8_t>(RasterDtype::u8));
  out.push_back(static_cast<uint8_t>(raster.channels));
  put_u32(out, static_cast<uint32_t>(raster.width));
  put_u32(out, static_cast<uint32_t>(raster.height));
  out.insert(out.end(), raster.data.begin(), raster.data.end());
  write_file(path, out);
}

void write_raster_bool(const std::filesystem::path& path, const MaskRaster& raster) {
  if (raster.width() < 1 || raster.height() < 1)
    throw std::invalid_argument("write_raster_bool: empty raster");
  Bytes out = header(kKindRaster);
  out.push_back(static_cast<uint8_t>(RasterDtype::bool_packed));
  out.push_back(1);
  put_u32(out, static_cast<uint32_t>(raster.width()));
  put_u32(out, static_cast<uint32_t>(raster.height()));
  const int row_bytes = (raster.width() + 7) / 8;
  for (int y = 0; y < raster.height(); ++y) {
    for (int byte = 0; byte < row_bytes; ++byte) {
      uint8_t packed = 0;
      for (int bit = 0; bit < 8; ++bit) {
        const int x = byte * 8 + bit;
        if (x < raster.width() && raster.at(x, y)) packed |= static_cast<uint8_t>(1u << bit);
      }
      out.push_back(packed);
    }
  }
  write_file(path, out);
}

RasterF32 parse_raster_f32(std::span<const uint8_t> bytes) {
  const RasterHeader h = parse_raster_header(bytes, RasterDtype::f32);
  check_payload_size(bytes, h.cells() * 4);
  RasterF32 out{h.channels, h.width, h.height, {}};
  out.data.resize(h.cells());
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = get_f32(bytes, kHeaderSize + 4 * i);
  return out;
}

RasterU8 parse_raster_u8(std::span<const uint8_t> bytes) {
  const RasterHeader h = parse_raster_header(bytes, RasterDtype::u8);
  check_payload_size(bytes, h.cells());
  RasterU8 out{h.channels, h.width, h.height, {}};
  out.data.assign(bytes.begin() + kHeaderSize, bytes.end());
  return out;
}

MaskRaster parse_raster_bool(std::span<const uint8_t> bytes) {
  const RasterHeader h = parse_raster_header(bytes, RasterDtype::bool_packed);
  if (h.channels != 1)
    throw ParseError(ParseError::Kind::bad_value, "bool rasters must be single-channel");
  const size_t row_bytes = (static_cast<size_t>(h.width) + 7) / 8;
  check_payload_size(bytes, row_bytes * h.height);
  MaskRaster out(h.width, h.height, 0);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      const uint8_t byte = bytes[kHeaderSize + y * row_bytes + x / 8];
      out.at(x, y) = (byte >> (x % 8)) & 1u;
    }
  }
  return out;
}

RasterF32 read_raster_f32(const std::filesystem::path& path) {
  return parse_raster_f32(read_file(path));
}
RasterU8 read_raster_u8(const std::filesystem::path& path) {
  return parse_raster_u8(read_file(path));
}
MaskRaster read_raster_bool(const std::filesystem::path& path) {
  return parse_raster_bool(read_file(path));
}

void write_events_binary(const std::filesystem::path& path, std::span<const Event> events) {
  Bytes out = header(kKindEvents);
  put_u64(out, events.size());
  out.push_back(0);
  out.push_back(0);
  out.reserve(out.size() + events.size() * kEventRecordSize);
  for (const Event& e : events) {
    put_f64(out, e.t);
    put_u16(out, e.x);
    put_u16(out, e.y);
    out.push_back(static_cast<uint8_t>(e.p));
  }
  write_file(path, out);
}

std::vector<Event> parse_events_binary(std::span<const uint8_t> bytes) {
  check_header(bytes, kKindEvents);
  const uint64_t count = get_u64(bytes, 6);
  if (count > (bytes.size() / kEventRecordSize) + 1)
    throw ParseError(ParseError::Kind::truncated, "event payload truncated");
  const size_t expected = count * kEventRecordSize;
  const size_t actual = bytes.size() - kHeaderSize;
  if (actual < expected) throw ParseError(ParseError::Kind::truncated, "event payload truncated");
  if (actual > expected)
    throw ParseError(ParseError::Kind::trailing_data, "trailing bytes after events");

  std::vector<Event> events;
  events.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const size_t at = kHeaderSize + i * kEventRecordSize;
    Event e;
    e.t = get_f64(bytes, at);
    e.x = get_u16(bytes, at + 8);
    e.y = get_u16(bytes, at + 10);
    const int8_t p = static_cast<int8_t>(bytes[at + 12]);
    if (!std::isfinite(e.t))
      throw ParseError(ParseError::Kind::bad_value, "non-finite event timestamp");
    if (p != 1 && p != -1)
      throw ParseError(ParseError::Kind::bad_value, "event polarity must be -1 or +1");
    e.p = p;
    events.push_back(e);
  }
  return events;
}

std::vector<Event> read_events_binary(const std::filesystem::path& path) {
  return parse_events_binary(read_file(path));
}

void write_events_csv(const std::filesystem::path& path, std::span<const Event> events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError(ParseError::Kind::io, "cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "t,x,y,p\n";
  for (const Event& e : events)
    out << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
  if (!out) throw ParseError(ParseError::Kind::io, "write failed on " + path.string());
}

std::vector<Event> read_events_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::io, "cannot open " + path.string());
  std::vector<Event> events;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("t,", 0) == 0) continue;  // header
    std::istringstream row(line);
    double t;
    long x, y, p;
    char c1, c2, c3;
    if (!(row >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' || c3 != ',')
      throw ParseError(ParseError::Kind::bad_value,
                       "bad event CSV row at line " + std::to_string(line_no));
    if (!std::isfinite(t) || x < 0 || x > 0xffff || y < 0 || y > 0xffff || (p != 1 && p != -1))
      throw ParseError(ParseError::Kind::bad_value,
                       "event values out of range at line " + std::to_string(line_no));
    events.push_back({t, static_cast<uint16_t>(x), static_cast<uint16_t>(y),
                      static_cast<int8_t>(p)});
  }
  return events;
}

std::vector<Event> read_events_auto(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return read_events_csv(path);
  return read_events_binary(path);
}

void save_flow(const std::filesystem::path& path, const FlowField& flow) {
  RasterF32 raster{3, flow.width(), flow.height(), {}};
  raster.data.resize(static_cast<size_t>(3) * flow.width() * flow.height());
  const size_t plane = flow.u.size();
  for (size_t i = 0; i < plane; ++i) {
    raster.data[i] = static_cast<float>(flow.u[i]);
    raster.data[plane + i] = static_cast<float>(flow.v[i]);
    raster.data[2 * plane + i] = flow.valid[i] ? 1.0f : 0.0f;
  }
  write_raster(path, raster);
}

FlowField load_flow(const std::filesystem::path& path, double dt) {
  const RasterF32 raster = read_raster_f32(path);
  if (raster.channels != 3)
    throw ParseError(ParseError::Kind::bad_value, "flow rasters have 3 channels (u, v, valid)");
  FlowField flow(raster.width, raster.height, dt);
  const size_t plane = flow.u.size();
  for (size_t i = 0; i < plane; ++i) {
    flow.u[i] = raster.data[i];
    flow.v[i] = raster.data[plane + i];
    flow.valid[i] = raster.data[2 * plane + i] != 0.0f;
  }
  return flow;
}

void save_depth(const std::filesystem::path& path, const DepthMap& depth) {
  RasterF32 raster{2, depth.width(), depth.height(), {}};
  raster.data.resize(static_cast<size_t>(2) * depth.width() * depth.height());
  const size_t plane = depth.z.size();
  for (size_t i = 0; i < plane; ++i) {
    raster.data[i] = static_cast<float>(depth.z[i]);
    raster.data[plane + i] = depth.valid[i] ? 1.0f : 0.0f;
  }
  write_raster(path, raster);
}

DepthMap load_depth(const std::filesystem::path& path) {
  const RasterF32 raster = read_raster_f32(path);
  if (raster.channels != 2)
    throw ParseError(ParseError::Kind::bad_value, "depth rasters have 2 channels (z, valid)");
  DepthMap depth(raster.width, raster.height);
  const size_t plane = depth.z.size();
  for (size_t i = 0; i < plane; ++i) {
    depth.z[i] = raster.data[i];
    depth.valid[i] = raster.data[plane + i] != 0.0f;
  }
  return depth;
}

void save_label_raster(const std::filesystem::path& path, const Raster<uint8_t>& label) {
  RasterU8 raster{1, label.width(), label.height(), {label.begin(), label.end()}};
  write_raster(path, raster);
}

Raster<uint8_t> load_label_raster(const std::filesystem::path& path) {
  const RasterU8 raster = read_raster_u8(path);
  if (raster.channels != 1)
    throw ParseError(ParseError::Kind::bad_value, "label rasters are single-channel");
  Raster<uint8_t> label(raster.width, raster.height, 0);
  std::copy(raster.data.begin(), raster.data.end(), label.begin());
  return label;
}

void save_volume(const std::filesystem::path& path, const EventVolume& volume) {
  RasterF32 raster{volume.bins, volume.width, volume.height, {}};
  raster.data.resize(volume.data.size());
  for (size_t i = 0; i < volume.data.size(); ++i)
    raster.data[i] = static_cast<float>(volume.data[i]);
  write_raster(path, raster);
}

std::string format_mask_meta(const LabelMask& mask, int slice_index) {
  std::ostringstream out;
  out.precision(17);
  out << "slice = " << slice_index << '\n'
      << "slice_time = " << mask.slice_time << '\n'
      << "accepted = " << (mask.decision.accepted ? "true" : "false") << '\n'
      << "rejection_reason = " << to_string(mask.decision.rejection_reason) << '\n'
      << "threshold = " << mask.decision.threshold << '\n'
      << "total_variance = " << mask.decision.total_variance << '\n'
      << "between_class_variance = " << mask.decision.between_class_variance << '\n';
  return out.str();
}

std::map<std::string, std::string, std::less<>> parse_key_values(const std::string& text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    if (!key.empty()) kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace evseg
