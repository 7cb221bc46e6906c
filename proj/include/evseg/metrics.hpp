#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evseg/geometry.hpp"
#include "evseg/raster.hpp"

namespace evseg {

// Intersection-over-union of the predicted and ground-truth masks
// restricted to pixels that received events:
//   |(E & P) & (E & O)| / |(E & P) | (E & O)|.
// Returns nullopt when the union is empty (no object visible in events).
std::optional<double> event_masked_iou(const MaskRaster& gt, const MaskRaster& pred,
                                       const MaskRaster& events);

// Fraction of IoU values at or above the threshold. Throws on an empty
// list or a threshold outside (0, 1).
double detection_rate(const std::vector<double>& ious, double threshold);

// Mean endpoint error over jointly valid pixels, in pixels.
// Throws std::invalid_argument when no pixel is valid in both fields.
double epe(const FlowField& flow_a, const FlowField& flow_b);

// Focal loss for a binary pixel classification with label y in {-1, +1}
// and predicted foreground probability p:
//   p_t = p if y = +1 else 1 - p;   L = -(1 - p_t)^gamma * ln(p_t).
// p is clamped to [1e-7, 1 - 1e-7]; gamma = 0 recovers cross-entropy.
double focal_loss(double p, int y, double gamma = 0.25);

// Per-slice IoU audit plus aggregate statistics. Slices without a visible
// object are listed but excluded from mean/std and the detection rate.
struct IoUReport {
  struct Row {
    double slice_time = 0;
    std::optional<double> iou;
    bool detected = false;
  };
  std::vector<Row> per_slice;
  double mean = 0;
  double stddev = 0;
  double detection_rate = 0;
  double iou_threshold = 0.3;
  int evaluated = 0;  // slices entering the aggregates

  static IoUReport build(const std::vector<std::pair<double, std::optional<double>>>& slices,
                         double iou_threshold = 0.3);

  // Mean +/- std as integer percents, e.g. "53±19".
  std::string summary() const;
  // CSV with header slice_time,iou,detected; no-object slices keep the
  // columns empty.
  std::string csv() const;
};

}  // namespace evseg
