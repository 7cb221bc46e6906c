#include "evseg/egomotion.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "evseg/errors.hpp"

namespace evseg {

namespace {

constexpr double kConditionLimit = 1e12;
constexpr uint64_t kSubsampleStream = 0x9e3779b97f4a7c15ull;

// Columns of the valid-pixel table used by the RANSAC loop.
struct SampleTable {
  std::vector<double> x, y, inv_z;
  std::vector<double> flow_u, flow_v;  // observed flow, pixels per slice
  std::vector<int> px, py;

  size_t size() const { return x.size(); }
  PixelSample pixel_sample(size_t i, double fx, double fy, double dt) const {
    return {x[i], y[i], 1.0 / inv_z[i], flow_u[i] / (fx * dt), flow_v[i] / (fy * dt)};
  }
};

SampleTable collect_valid(const FlowField& flow, const DepthMap& depth,
                          const CameraIntrinsics& intr) {
  SampleTable t;
  for (int py = 0; py < flow.height(); ++py) {
    const double y = intr.calib_y(py);
    for (int px = 0; px < flow.width(); ++px) {
      if (!flow.valid.at(px, py) || !depth.valid.at(px, py)) continue;
      const double z = depth.z.at(px, py);
      if (!(z > 0)) continue;
      t.x.push_back(intr.calib_x(px));
      t.y.push_back(y);
      t.inv_z.push_back(1.0 / z);
      t.flow_u.push_back(flow.u.at(px, py));
      t.flow_v.push_back(flow.v.at(px, py));
      t.px.push_back(px);
      t.py.push_back(py);
    }
  }
  return t;
}

// Squared pixel residual of the observed flow against the twist's prediction.
inline double residual_sq(const SampleTable& t, size_t i,
                          const Eigen::Matrix<double, 6, 1>& theta,
                          double fx, double fy, double dt) {
  const double x = t.x[i], y = t.y[i], iz = t.inv_z[i];
  const double pu = ((-theta[0] + x * theta[2]) * iz + x * y * theta[3] -
                     (1.0 + x * x) * theta[4] + y * theta[5]) * fx * dt;
  const double pv = ((-theta[1] + y * theta[2]) * iz + (1.0 + y * y) * theta[3] -
                     x * y * theta[4] - x * theta[5]) * fy * dt;
  const double du = t.flow_u[i] - pu;
  const double dv = t.flow_v[i] - pv;
  return du * du + dv * dv;
}

}  // namespace

void RansacConfig::validate() const {
  if (!(stop_probability > 0 && stop_probability < 1))
    throw std::invalid_argument("ransac: stop_probability must lie in (0, 1)");
  if (sample_size < 3) throw std::invalid_argument("ransac: sample_size must be >= 3");
  if (max_iterations < 1) throw std::invalid_argument("ransac: max_iterations must be >= 1");
  if (!(inlier_threshold > 0)) throw std::invalid_argument("ransac: inlier_threshold must be positive");
  if (!(min_inlier_fraction >= 0 && min_inlier_fraction <= 1))
    throw std::invalid_argument("ransac: min_inlier_fraction must lie in [0, 1]");
  if (count_subsample < 1) throw std::invalid_argument("ransac: count_subsample must be >= 1");
}

DesignRows build_design_rows(const PixelSample& sample) {
  if (!(sample.z > 0)) throw std::domain_error("build_design_rows: depth must be positive");
  // rigid_flow_at is linear in the twist, so its values on the six basis
  // twists are exactly the matrix coefficients.
  static const std::array<CameraVelocity, 6> kBasis = [] {
    std::array<CameraVelocity, 6> basis;
    for (int j = 0; j < 3; ++j) {
      basis[j].v[j] = 1.0;
      basis[j + 3].omega[j] = 1.0;
    }
    return basis;
  }();
  DesignRows rows;
  for (int j = 0; j < 6; ++j)
    rows.a.col(j) = rigid_flow_at(sample.x, sample.y, sample.z, kBasis[j]);
  rows.b = {sample.flow_x, sample.flow_y};
  return rows;
}

std::optional<CameraVelocity> solve_minimal(std::span<const PixelSample, 3> samples) {
  Eigen::Matrix<double, 6, 6> a;
  Eigen::Matrix<double, 6, 1> b;
  for (int i = 0; i < 3; ++i) {
    const DesignRows rows = build_design_rows(samples[i]);
    a.block<2, 6>(2 * i, 0) = rows.a;
    b.segment<2>(2 * i) = rows.b;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 6, 6>> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(5);
  if (!(smin > 0) || smax / smin > kConditionLimit) return std::nullopt;
  return CameraVelocity::from_stacked(svd.solve(b));
}

CameraVelocity solve_least_squares(std::span<const PixelSample> samples) {
  if (samples.size() < 3)
    throw InsufficientSamples("solve_least_squares: need at least 3 samples");
  Eigen::MatrixXd a(2 * samples.size(), 6);
  Eigen::VectorXd b(2 * samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const DesignRows rows = build_design_rows(samples[i]);
    a.block<2, 6>(2 * i, 0) = rows.a;
    b.segment<2>(2 * i) = rows.b;
  }
  // Orthogonal reduction to the 6x6 core, then SVD for the minimum-norm
  // solution; equivalent to the SVD of the full stack at a fraction of the
  // cost on tall systems.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::Matrix<double, 6, 6> r =
      qr.matrixQR().topRows<6>().triangularView<Eigen::Upper>();
  const Eigen::VectorXd qtb = (qr.householderQ().transpose() * b).head<6>();
  Eigen::JacobiSVD<Eigen::Matrix<double, 6, 6>> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return CameraVelocity::from_stacked(svd.solve(qtb));
}

EgomotionEstimate estimate_egomotion(const FlowField& flow, const DepthMap& depth,
                                     const CameraIntrinsics& intr, const RansacConfig& cfg) {
  cfg.validate();
  intr.validate();
  require_same_shape(flow.u, depth.z, "estimate_egomotion");
  if (flow.width() != intr.width || flow.height() != intr.height)
    throw ShapeError("estimate_egomotion: field dimensions do not match intrinsics");

  const SampleTable table = collect_valid(flow, depth, intr);
  const size_t n = table.size();
  if (n < static_cast<size_t>(cfg.sample_size))
    throw EstimationFailed("estimate_egomotion: fewer valid pixels than sample_size");

  const double fx = intr.fx, fy = intr.fy, dt = flow.dt;
  const double thr_sq = cfg.inlier_threshold * cfg.inlier_threshold;

  // Counting subsample: uniform without replacement, from a dedicated
  // stream so hypothesis draws stay aligned across raster sizes.
  std::vector<size_t> count_idx(n);
  std::iota(count_idx.begin(), count_idx.end(), size_t{0});
  if (n > static_cast<size_t>(cfg.count_subsample)) {
    std::mt19937_64 sub_rng(cfg.rng_seed ^ kSubsampleStream);
    for (size_t i = 0; i < static_cast<size_t>(cfg.count_subsample); ++i) {
      std::uniform_int_distribution<size_t> pick(i, n - 1);
      std::swap(count_idx[i], count_idx[pick(sub_rng)]);
    }
    count_idx.resize(cfg.count_subsample);
  }
  const size_t n_count = count_idx.size();

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<size_t> pick_any(0, n - 1);

  Eigen::Matrix<double, 6, 1> best_theta = Eigen::Matrix<double, 6, 1>::Zero();
  int64_t best_count = -1;
  int iterations = 0;
  long draws = 0;
  const long draw_cap = 10L * cfg.max_iterations;

  std::array<PixelSample, 3> minimal;
  while (iterations < cfg.max_iterations && draws < draw_cap) {
    ++draws;
    size_t i0 = pick_any(rng), i1 = pick_any(rng), i2 = pick_any(rng);
    if (i0 == i1 || i0 == i2 || i1 == i2) continue;
    minimal[0] = table.pixel_sample(i0, fx, fy, dt);
    minimal[1] = table.pixel_sample(i1, fx, fy, dt);
    minimal[2] = table.pixel_sample(i2, fx, fy, dt);
    const auto model = solve_minimal(std::span<const PixelSample, 3>(minimal));
    if (!model) continue;  // degenerate draw, does not consume an iteration

    const Eigen::Matrix<double, 6, 1> theta = model->stacked();
    int64_t count = 0;
    for (size_t idx : count_idx) {
      if (residual_sq(table, idx, theta, fx, fy, dt) < thr_sq) ++count;
    }
    ++iterations;
    if (count > best_count) {
      best_count = count;
      best_theta = theta;
    }
    // Standard adaptive stop: enough iterations seen to contain one
    // all-inlier sample with probability stop_probability.
    const double w = static_cast<double>(best_count) / static_cast<double>(n_count);
    const double w_s = std::pow(w, cfg.sample_size);
    if (w_s >= 1.0) break;
    if (w_s > 0.0 &&
        iterations >= std::log1p(-cfg.stop_probability) / std::log1p(-w_s)) break;
  }

  if (best_count < 0)
    throw EstimationFailed("estimate_egomotion: every sampled hypothesis was degenerate");

  // Consensus of the best hypothesis over all valid pixels.
  std::vector<PixelSample> inliers;
  for (size_t i = 0; i < n; ++i) {
    if (residual_sq(table, i, best_theta, fx, fy, dt) < thr_sq)
      inliers.push_back(table.pixel_sample(i, fx, fy, dt));
  }
  if (inliers.size() < static_cast<size_t>(cfg.sample_size) ||
      static_cast<double>(inliers.size()) < cfg.min_inlier_fraction * static_cast<double>(n))
    throw EstimationFailed("estimate_egomotion: consensus below min_inlier_fraction");

  const CameraVelocity refined = solve_least_squares(inliers);
  const Eigen::Matrix<double, 6, 1> theta = refined.stacked();

  EgomotionEstimate est;
  est.velocity = refined;
  est.inlier_mask = MaskRaster(flow.width(), flow.height(), 0);
  est.iterations_used = iterations;
  double residual_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    const double r_sq = residual_sq(table, i, theta, fx, fy, dt);
    if (r_sq < thr_sq) {
      est.inlier_mask.at(table.px[i], table.py[i]) = 1;
      ++est.inlier_count;
      residual_sum += std::sqrt(r_sq);
    }
  }
  est.mean_inlier_residual = est.inlier_count > 0 ? residual_sum / est.inlier_count : 0.0;
  return est;
}

std::string velocity_trace_csv(const std::vector<VelocityTraceRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "t,vx,vy,vz,wx,wy,wz,inlier_fraction,status\n";
  for (const VelocityTraceRow& r : rows) {
    out << r.t << ',';
    if (r.failed) {
      out << ",,,,,,," << "failed\n";
    } else {
      out << r.velocity.v.x() << ',' << r.velocity.v.y() << ',' << r.velocity.v.z() << ','
          << r.velocity.omega.x() << ',' << r.velocity.omega.y() << ',' << r.velocity.omega.z()
          << ',' << r.inlier_fraction << ",ok\n";
    }
  }
  return out.str();
}

}  // namespace evseg
