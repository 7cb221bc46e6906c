#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "evseg/raster.hpp"

namespace evseg {

// Pinhole camera calibration. Pixel (px, py) maps to calibrated image
// coordinates x = (px - cx) / fx, y = (py - cy) / fy; flow converts the
// same way per component.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  double calib_x(double px) const { return (px - cx) / fx; }
  double calib_y(double py) const { return (py - cy) / fy; }

  // Throws std::invalid_argument on fx/fy <= 0 or principal point outside
  // the sensor.
  void validate() const;
};

// Instantaneous 6-DOF camera twist: linear velocity v (m/s) and angular
// velocity omega (rad/s), both in the camera frame.
struct CameraVelocity {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();

  static CameraVelocity zero() { return {}; }

  Eigen::Matrix<double, 6, 1> stacked() const {
    Eigen::Matrix<double, 6, 1> t;
    t << v, omega;
    return t;
  }
  static CameraVelocity from_stacked(const Eigen::Matrix<double, 6, 1>& t) {
    return {t.head<3>(), t.tail<3>()};
  }
  bool finite() const;
};

// One observation for egomotion fitting: calibrated coordinates, metric
// depth, and the observed calibrated flow in per-second units.
struct PixelSample {
  double x = 0, y = 0;   // calibrated coordinates (dimensionless)
  double z = 1;          // depth along the optical axis (m), > 0
  double flow_x = 0, flow_y = 0;  // calibrated flow (1/s)
};

// Dense 2D flow in pixel units per slice of duration dt. Invalid pixels
// carry no meaning and are skipped by every reduction.
struct FlowField {
  Raster<double> u, v;
  MaskRaster valid;
  double dt = 0.025;

  FlowField() = default;
  FlowField(int width, int height, double dt_)
      : u(width, height), v(width, height), valid(width, height, 1), dt(dt_) {}

  int width() const { return u.width(); }
  int height() const { return u.height(); }
};

// Dense metric depth with validity mask (depth sensors leave holes).
struct DepthMap {
  Raster<double> z;
  MaskRaster valid;

  DepthMap() = default;
  DepthMap(int width, int height, double fill = 1.0)
      : z(width, height, fill), valid(width, height, 1) {}

  int width() const { return z.width(); }
  int height() const { return z.height(); }
};

// Calibrated motion field of a rigid point at calibrated coordinates
// (x, y) and depth z under camera twist `vel`:
//   dx/dt = (-v_x + x v_z)/z + x y w_x - (1 + x^2) w_y + y w_z
//   dy/dt = (-v_y + y v_z)/z + (1 + y^2) w_x - x y w_y - x w_z
// Throws std::domain_error on z <= 0.
Eigen::Vector2d rigid_flow_at(double x, double y, double z, const CameraVelocity& vel);

// Renders the camera-induced flow over a depth map: per-pixel rigid_flow_at
// on calibrated coordinates, converted back to pixel units and scaled by dt.
// Validity is copied from the depth map.
FlowField render_rigid_field(const DepthMap& depth, const CameraVelocity& vel,
                             const CameraIntrinsics& intr, double dt);

// An independently moving object's additive flow contribution and its
// support region.
struct ObjectField {
  FlowField field;
  MaskRaster region;
};

// Total motion field: rigid flow outside all object regions, rigid plus the
// object's field inside its region. Regions must be pairwise disjoint
// (MaskOverlapError otherwise).
FlowField compose_motion_field(const FlowField& rigid, const std::vector<ObjectField>& objects);

// Marks pixels with depth beyond z_max invalid (far depth returns are
// unreliable and excluded from the pipeline).
DepthMap clip_depth(const DepthMap& depth, double z_max);

}  // namespace evseg
