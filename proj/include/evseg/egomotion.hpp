#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evseg/geometry.hpp"

namespace evseg {

struct RansacConfig {
  int max_iterations = 300;
  double stop_probability = 0.999;
  int sample_size = 3;            // pixels per hypothesis (2 equations each)
  double inlier_threshold = 0.5;  // flow residual in pixels per slice
  double min_inlier_fraction = 0.3;
  uint64_t rng_seed = 1;
  // Inlier counting runs on a seeded uniform subsample of at most this many
  // pixels; the final refinement always uses every inlier.
  int count_subsample = 10000;

  void validate() const;
};

struct EgomotionEstimate {
  CameraVelocity velocity;
  MaskRaster inlier_mask;
  int64_t inlier_count = 0;
  int iterations_used = 0;
  double mean_inlier_residual = 0;  // pixels
};

// The two linear-system rows tying one pixel's calibrated flow to the
// camera twist theta = (v_x, v_y, v_z, w_x, w_y, w_z):
//   a.row(0) . theta = flow_x,  a.row(1) . theta = flow_y.
// Rows are generated by evaluating rigid_flow_at on the six basis twists,
// so the system and the forward model cannot diverge.
struct DesignRows {
  Eigen::Matrix<double, 2, 6> a;
  Eigen::Vector2d b;
};
DesignRows build_design_rows(const PixelSample& sample);

// Solves the stacked 6x6 system from exactly sample_size = 3 pixels.
// Returns nullopt when the system is ill-conditioned (condition number
// above 1e12); the caller draws a fresh sample.
std::optional<CameraVelocity> solve_minimal(std::span<const PixelSample, 3> samples);

// Minimum-norm least-squares twist over all samples via SVD.
// Throws InsufficientSamples for fewer than 3 samples.
CameraVelocity solve_least_squares(std::span<const PixelSample> samples);

// RANSAC over 3-pixel hypotheses with the stop criterion
// 1 - (1 - w^s)^k >= stop_probability, then SVD refinement on the best
// consensus set. Deterministic for a fixed rng_seed. Throws
// EstimationFailed when no model reaches min_inlier_fraction.
EgomotionEstimate estimate_egomotion(const FlowField& flow, const DepthMap& depth,
                                     const CameraIntrinsics& intr, const RansacConfig& cfg);

// One row of the velocity-trace export.
struct VelocityTraceRow {
  double t = 0;
  CameraVelocity velocity;
  double inlier_fraction = 0;
  bool failed = false;
};

// CSV with header t,vx,vy,vz,wx,wy,wz,inlier_fraction,status.
std::string velocity_trace_csv(const std::vector<VelocityTraceRow>& rows);

}  // namespace evseg
