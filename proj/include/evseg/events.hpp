#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evseg/raster.hpp"

namespace evseg {

// One polarity event. Streams are ordered by non-decreasing timestamp.
struct Event {
  double t = 0;          // seconds
  uint16_t x = 0, y = 0;  // pixel coordinates
  int8_t p = 1;          // polarity, -1 or +1

  bool operator==(const Event&) const = default;
};

struct EventSlice {
  std::vector<Event> events;
  double t_start = 0, t_end = 0;  // [t_start, t_end), t_end > t_start
};

// Partitions an ordered stream into contiguous half-open windows
// [k*period, (k+1)*period) anchored at the first timestamp. Gaps yield
// empty slices; every event lands in exactly one slice. Throws
// std::invalid_argument on unordered input.
std::vector<EventSlice> slice_stream(std::span<const Event> events, double period);

// B x H x W tensor of signed polarity, spread with a bilinear kernel
// k(a) = max(0, 1 - |a|) over the two nearest temporal bins (and spatial
// neighbors, when coordinates are fractional). Normalized timestamps map
// [t_start, t_end) affinely onto [0, B-1].
struct EventVolume {
  int bins = 0, width = 0, height = 0;
  std::vector<double> data;  // bin-major, then row-major
  double t_start = 0, t_end = 0;

  double& at(int b, int x, int y) {
    return data[(static_cast<size_t>(b) * height + y) * width + x];
  }
  double at(int b, int x, int y) const {
    return data[(static_cast<size_t>(b) * height + y) * width + x];
  }
  double sum() const;
};

// Throws std::invalid_argument for bins < 1 or events outside the sensor.
EventVolume build_volume(const EventSlice& slice, int bins, int width, int height);

// Boolean raster flagging each pixel that received at least one event;
// this is the E_t operand of the event-masked IoU.
MaskRaster project_events(const EventSlice& slice, int width, int height);

}  // namespace evseg
