#include "evseg/events.hpp"

#include <cmath>
#include <stdexcept>

namespace evseg {

std::vector<EventSlice> slice_stream(std::span<const Event> events, double period) {
  if (!(period > 0)) throw std::invalid_argument("slice_stream: period must be positive");
  std::vector<EventSlice> slices;
  if (events.empty()) return slices;

  // Windows live on the absolute k*period grid; the sequence starts at the
  // window containing the first timestamp.
  const auto window_of = [&](double t) {
    long k = static_cast<long>(std::floor(t / period));
    // Guard the half-open boundaries against floating-point rounding.
    while (t < static_cast<double>(k) * period) --k;
    while (t >= static_cast<double>(k + 1) * period) ++k;
    return k;
  };

  const long base = window_of(events.front().t);
  double prev = events.front().t;
  for (const Event& e : events) {
    if (e.t < prev) throw std::invalid_argument("slice_stream: events are not time-ordered");
    prev = e.t;

    const long k = window_of(e.t) - base;
    while (slices.size() <= static_cast<size_t>(k)) {
      const auto i = static_cast<double>(base + static_cast<long>(slices.size()));
      slices.push_back({{}, i * period, (i + 1) * period});
    }
    slices[static_cast<size_t>(k)].events.push_back(e);
  }
  return slices;
}

double EventVolume::sum() const {
  double s = 0;
  for (double v : data) s += v;
  return s;
}

EventVolume build_volume(const EventSlice& slice, int bins, int width, int height) {
  if (bins < 1) throw std::invalid_argument("build_volume: bins must be >= 1");
  if (width < 1 || height < 1) throw std::invalid_argument("build_volume: empty sensor");
  if (!(slice.t_end > slice.t_start))
    throw std::invalid_argument("build_volume: slice duration must be positive");

  EventVolume vol;
  vol.bins = bins;
  vol.width = width;
  vol.height = height;
  vol.t_start = slice.t_start;
  vol.t_end = slice.t_end;
  vol.data.assign(static_cast<size_t>(bins) * width * height, 0.0);

  const double time_scale = (bins - 1) / (slice.t_end - slice.t_start);
  for (const Event& e : slice.events) {
    if (e.x >= width || e.y >= height)
      throw std::invalid_argument("build_volume: event outside sensor bounds");
    const double ts = (e.t - slice.t_start) * time_scale;
    const double xs = static_cast<double>(e.x);
    const double ys = static_cast<double>(e.y);

    // Trilinear spread; with integer pixel coordinates the spatial kernel
    // degenerates to a single cell, but fractional coordinates (e.g. after
    // calibration) work through the same path.
    const int tb = static_cast<int>(std::floor(ts));
    const int xb = static_cast<int>(std::floor(xs));
    const int yb = static_cast<int>(std::floor(ys));
    for (int dt = 0; dt <= 1; ++dt) {
      const int b = tb + dt;
      if (b < 0 || b >= bins) continue;
      const double wt = 1.0 - std::abs(ts - b);
      if (wt <= 0) continue;
      for (int dy = 0; dy <= 1; ++dy) {
        const int y = yb + dy;
        if (y < 0 || y >= height) continue;
        const double wy = 1.0 - std::abs(ys - y);
        if (wy <= 0) continue;
        for (int dx = 0; dx <= 1; ++dx) {
          const int x = xb + dx;
          if (x < 0 || x >= width) continue;
          const double wx = 1.0 - std::abs(xs - x);
          if (wx <= 0) continue;
          vol.at(b, x, y) += static_cast<double>(e.p) * wt * wy * wx;
        }
      }
    }
  }
  return vol;
}

MaskRaster project_events(const EventSlice& slice, int width, int height) {
  MaskRaster raster(width, height, 0);
  for (const Event& e : slice.events) {
    if (e.x < width && e.y < height) raster.at(e.x, e.y) = 1;
  }
  return raster;
}

}  // namespace evseg
