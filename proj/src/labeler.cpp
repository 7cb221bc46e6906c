#include "evseg/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evseg/errors.hpp"

namespace evseg {

ResidualField residual_field(const FlowField& observed, const FlowField& rigid) {
  require_same_shape(observed.u, rigid.u, "residual_field");
  if (observed.dt != rigid.dt)
    throw UnitError("residual_field: slice durations differ");

  ResidualField out;
  out.r = Raster<double>(observed.width(), observed.height(), 0.0);
  out.valid = MaskRaster(observed.width(), observed.height(), 0);
  for (size_t i = 0; i < out.r.size(); ++i) {
    if (!observed.valid[i] || !rigid.valid[i]) continue;
    out.r[i] = std::hypot(observed.u[i] - rigid.u[i], observed.v[i] - rigid.v[i]);
    out.valid[i] = 1;
  }
  return out;
}

ResidualHistogram build_histogram(const ResidualField& res, int bins, double clip_value) {
  if (bins < 1) throw std::invalid_argument("build_histogram: bins must be >= 1");
  if (!(clip_value > 0)) throw std::invalid_argument("build_histogram: clip_value must be positive");
  require_same_shape(res.r, res.valid, "build_histogram");

  ResidualHistogram hist;
  hist.counts.assign(bins, 0);
  hist.clip_value = clip_value;
  const double inv_width = bins / clip_value;
  for (size_t i = 0; i < res.r.size(); ++i) {
    if (!res.valid[i]) continue;
    int k = static_cast<int>(res.r[i] * inv_width);
    if (k >= bins) k = bins - 1;
    ++hist.counts[k];
    ++hist.total;
  }
  return hist;
}

OtsuResult otsu_threshold(const ResidualHistogram& hist) {
  if (hist.total == 0) throw std::invalid_argument("otsu_threshold: empty histogram");
  const int bins = hist.bins();
  const double total = static_cast<double>(hist.total);

  // Global moments over bin centers (pixels).
  double sum_all = 0;
  for (int k = 0; k < bins; ++k) sum_all += static_cast<double>(hist.counts[k]) * hist.bin_center(k);
  const double mu = sum_all / total;
  double total_var = 0;
  for (int k = 0; k < bins; ++k) {
    const double d = hist.bin_center(k) - mu;
    total_var += static_cast<double>(hist.counts[k]) * d * d;
  }
  total_var /= total;

  // Scan split points t: background = bins <= t, imo = bins > t. Splits
  // with an empty background class cannot label anything background and
  // are not candidates; an empty imo class contributes zero.
  double best_sigma = -1.0;
  int best_t = 0;
  double count_bg = 0, sum_bg = 0;
  for (int t = 0; t < bins; ++t) {
    count_bg += static_cast<double>(hist.counts[t]);
    sum_bg += static_cast<double>(hist.counts[t]) * hist.bin_center(t);
    if (count_bg == 0) continue;
    const double count_imo = total - count_bg;
    const double mu_bg = sum_bg / count_bg;
    double sigma = (count_bg / total) * (mu_bg - mu) * (mu_bg - mu);
    if (count_imo > 0) {
      const double mu_imo = (sum_all - sum_bg) / count_imo;
      sigma += (count_imo / total) * (mu_imo - mu) * (mu_imo - mu);
    }
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_t = t;
    }
  }

  OtsuResult out;
  out.threshold = (best_t + 1) * hist.bin_width();
  out.between_class_variance = best_sigma;
  out.total_variance = total_var;
  return out;
}

const char* to_string(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::none: return "none";
    case RejectionReason::total_variance_too_high: return "total_variance_too_high";
    case RejectionReason::separation_too_low: return "separation_too_low";
  }
  return "unknown";
}

ThresholdDecision decide_threshold(const ResidualHistogram& hist, double eps_total_var,
                                   double eps_separation, bool reject_total_above) {
  const OtsuResult otsu = otsu_threshold(hist);
  ThresholdDecision d;
  d.threshold = otsu.threshold;
  d.total_variance = otsu.total_variance;
  d.between_class_variance = otsu.between_class_variance;

  const bool stage1_reject =
      reject_total_above ? otsu.total_variance > eps_total_var : otsu.total_variance < eps_total_var;
  if (stage1_reject) {
    d.accepted = false;
    d.rejection_reason = RejectionReason::total_variance_too_high;
  } else if (otsu.between_class_variance < eps_separation) {
    d.accepted = false;
    d.rejection_reason = RejectionReason::separation_too_low;
  } else {
    d.accepted = true;
    d.rejection_reason = RejectionReason::none;
  }
  return d;
}

LabelMask make_label_mask(const ResidualField& res, const ThresholdDecision& decision,
                          double slice_time) {
  if (!decision.accepted)
    throw ContractViolation("make_label_mask: decision was rejected; skip the slice");
  LabelMask mask;
  mask.label = Raster<uint8_t>(res.r.width(), res.r.height(),
                               static_cast<uint8_t>(Label::invalid));
  mask.decision = decision;
  mask.slice_time = slice_time;
  for (size_t i = 0; i < res.r.size(); ++i) {
    if (!res.valid[i]) continue;
    mask.label[i] = static_cast<uint8_t>(res.r[i] > decision.threshold ? Label::imo
                                                                       : Label::background);
  }
  return mask;
}

namespace {

// Separable sliding-window pass; `want` is the value that wins the window
// (1 for dilation, 0 for erosion). Out-of-image counts as background.
MaskRaster window_pass(const MaskRaster& in, int radius, uint8_t want) {
  const int w = in.width(), h = in.height();
  MaskRaster horiz(w, h, 0), out(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t v = static_cast<uint8_t>(1 - want);
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        const uint8_t cell = (xx >= 0 && xx < w) ? in.at(xx, y) : 0;
        if (cell == want) { v = want; break; }
      }
      horiz.at(x, y) = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t v = static_cast<uint8_t>(1 - want);
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        const uint8_t cell = (yy >= 0 && yy < h) ? horiz.at(x, yy) : 0;
        if (cell == want) { v = want; break; }
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

}  // namespace

MaskRaster label_equals(const LabelMask& mask, Label value) {
  MaskRaster out(mask.width(), mask.height(), 0);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = mask.label[i] == static_cast<uint8_t>(value) ? 1 : 0;
  return out;
}

LabelMask morphological_close(const LabelMask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("morphological_close: radius must be >= 0");
  if (radius == 0) return mask;

  const int w = mask.width(), h = mask.height();
  MaskRaster imo(w, h, 0);
  for (size_t i = 0; i < imo.size(); ++i)
    imo[i] = mask.label[i] == static_cast<uint8_t>(Label::imo) ? 1 : 0;

  const MaskRaster closed = window_pass(window_pass(imo, radius, 1), radius, 0);

  LabelMask out = mask;
  for (size_t i = 0; i < closed.size(); ++i) {
    if (mask.label[i] == static_cast<uint8_t>(Label::invalid)) continue;
    out.label[i] = static_cast<uint8_t>(closed[i] ? Label::imo : Label::background);
  }
  return out;
}

}  // namespace evseg
