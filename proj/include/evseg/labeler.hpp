#pragma once

#include <cstdint>
#include <vector>

#include "evseg/geometry.hpp"
#include "evseg/raster.hpp"

namespace evseg {

// Per-pixel l2 norm of (observed - rigid) flow, in pixels per slice.
struct ResidualField {
  Raster<double> r;
  MaskRaster valid;
};

ResidualField residual_field(const FlowField& observed, const FlowField& rigid);

// Histogram of residual magnitudes; residuals at or beyond clip_value fall
// into the last bin.
struct ResidualHistogram {
  std::vector<uint64_t> counts;
  double clip_value = 10.0;  // pixels
  uint64_t total = 0;

  int bins() const { return static_cast<int>(counts.size()); }
  double bin_width() const { return clip_value / bins(); }
  // Bin centers in pixels; the statistics below are computed over these.
  double bin_center(int k) const { return (k + 0.5) * bin_width(); }
};

ResidualHistogram build_histogram(const ResidualField& res, int bins = 256,
                                  double clip_value = 10.0);

struct OtsuResult {
  double threshold = 0;               // pixels, upper edge of the last background bin
  double between_class_variance = 0;  // pixels^2, at the selected threshold
  double total_variance = 0;          // pixels^2
};

// Exhaustive scan over every bin boundary, maximizing between-class
// variance with prefix-sum recurrences. Candidates whose background class
// is empty are skipped; ties break toward the smaller threshold.
// Throws std::invalid_argument on an empty histogram.
OtsuResult otsu_threshold(const ResidualHistogram& hist);

enum class RejectionReason : uint8_t {
  none = 0,
  total_variance_too_high = 1,
  separation_too_low = 2,
};

const char* to_string(RejectionReason reason);

struct ThresholdDecision {
  double threshold = 0;
  double total_variance = 0;
  double between_class_variance = 0;
  bool accepted = false;
  RejectionReason rejection_reason = RejectionReason::none;
};

// Two-stage confidence filter on the Otsu result. Stage 1 rejects slices
// whose residual histogram has total variance above eps_total_var (flow too
// noisy to trust boundaries); stage 2 rejects when the achieved
// between-class variance falls below eps_separation (no bimodal structure).
// Stage 1's comparison direction is configurable; the default rejects high
// variance. The threshold is filled in either way, for diagnostics.
ThresholdDecision decide_threshold(const ResidualHistogram& hist, double eps_total_var = 4.0,
                                   double eps_separation = 0.25,
                                   bool reject_total_above = true);

enum class Label : uint8_t {
  background = 0,
  imo = 1,
  invalid = 255,
};

// Per-pixel ternary labeling plus the decision it came from.
struct LabelMask {
  Raster<uint8_t> label;
  ThresholdDecision decision;
  double slice_time = 0;

  int width() const { return label.width(); }
  int height() const { return label.height(); }
};

// Residuals strictly above the threshold become imo, the rest background;
// invalid residual pixels stay invalid. Throws ContractViolation when the
// decision was rejected (callers must skip the slice instead).
LabelMask make_label_mask(const ResidualField& res, const ThresholdDecision& decision,
                          double slice_time = 0);

// Closing (dilation then erosion) of the imo class with a square
// structuring element of side 2*radius+1. Pixels outside the image and
// invalid pixels count as background during the passes; invalid pixels are
// restored afterwards. Radius 0 is the identity.
LabelMask morphological_close(const LabelMask& mask, int radius);

// Boolean raster of the pixels carrying one particular label.
MaskRaster label_equals(const LabelMask& mask, Label value);

}  // namespace evseg
