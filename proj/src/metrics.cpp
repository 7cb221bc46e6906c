#include "evseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace evseg {

std::optional<double> event_masked_iou(const MaskRaster& gt, const MaskRaster& pred,
                                       const MaskRaster& events) {
  require_same_shape(gt, pred, "event_masked_iou");
  require_same_shape(gt, events, "event_masked_iou");

  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!events[i]) continue;
    const bool o = gt[i] != 0;
    const bool p = pred[i] != 0;
    inter += (o && p);
    uni += (o || p);
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double detection_rate(const std::vector<double>& ious, double threshold) {
  if (ious.empty()) throw std::invalid_argument("detection_rate: empty IoU list");
  if (!(threshold > 0 && threshold < 1))
    throw std::invalid_argument("detection_rate: threshold must lie in (0, 1)");
  const auto detected = std::count_if(ious.begin(), ious.end(),
                                      [&](double v) { return v >= threshold; });
  return static_cast<double>(detected) / static_cast<double>(ious.size());
}

double epe(const FlowField& flow_a, const FlowField& flow_b) {
  require_same_shape(flow_a.u, flow_b.u, "epe");
  double sum = 0;
  int64_t n = 0;
  for (size_t i = 0; i < flow_a.u.size(); ++i) {
    if (!flow_a.valid[i] || !flow_b.valid[i]) continue;
    sum += std::hypot(flow_a.u[i] - flow_b.u[i], flow_a.v[i] - flow_b.v[i]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("epe: no jointly valid pixels");
  return sum / static_cast<double>(n);
}

double focal_loss(double p, int y, double gamma) {
  constexpr double eps = 1e-7;
  p = std::clamp(p, eps, 1.0 - eps);
  const double p_t = y > 0 ? p : 1.0 - p;
  return -std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

IoUReport IoUReport::build(const std::vector<std::pair<double, std::optional<double>>>& slices,
                           double iou_threshold) {
  if (!(iou_threshold > 0 && iou_threshold < 1))
    throw std::invalid_argument("iou report: threshold must lie in (0, 1)");
  IoUReport report;
  report.iou_threshold = iou_threshold;

  double sum = 0, sum_sq = 0;
  int detected = 0;
  for (const auto& [t, iou] : slices) {
    Row row;
    row.slice_time = t;
    row.iou = iou;
    row.detected = iou.has_value() && *iou >= iou_threshold;
    report.per_slice.push_back(row);
    if (iou.has_value()) {
      ++report.evaluated;
      sum += *iou;
      sum_sq += *iou * *iou;
      detected += row.detected;
    }
  }
  if (report.evaluated > 0) {
    report.mean = sum / report.evaluated;
    const double var = std::max(0.0, sum_sq / report.evaluated - report.mean * report.mean);
    report.stddev = std::sqrt(var);
    report.detection_rate = static_cast<double>(detected) / report.evaluated;
  }
  return report;
}

std::string IoUReport::summary() const {
  std::ostringstream out;
  out << llround(mean * 100.0) << "±" << llround(stddev * 100.0);
  return out.str();
}

std::string IoUReport::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "slice_time,iou,detected\n";
  for (const Row& row : per_slice) {
    out << row.slice_time << ',';
    if (row.iou.has_value()) {
      out << *row.iou << ',' << (row.detected ? 1 : 0);
    } else {
      out << ',';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace evseg
