#include "evseg/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace evseg {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("intrinsics: sensor size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw std::invalid_argument("intrinsics: principal point outside sensor");
}

bool CameraVelocity::finite() const {
  return v.allFinite() && omega.allFinite();
}

Eigen::Vector2d rigid_flow_at(double x, double y, double z, const CameraVelocity& vel) {
  if (!(z > 0)) throw std::domain_error("rigid_flow_at: depth must be positive");
  const double vx = vel.v.x(), vy = vel.v.y(), vz = vel.v.z();
  const double wx = vel.omega.x(), wy = vel.omega.y(), wz = vel.omega.z();
  return {
      (-vx + x * vz) / z + x * y * wx - (1.0 + x * x) * wy + y * wz,
      (-vy + y * vz) / z + (1.0 + y * y) * wx - x * y * wy - x * wz,
  };
}

FlowField render_rigid_field(const DepthMap& depth, const CameraVelocity& vel,
                             const CameraIntrinsics& intr, double dt) {
  intr.validate();
  if (depth.width() != intr.width || depth.height() != intr.height)
    throw ShapeError("render_rigid_field: depth dimensions do not match intrinsics");
  if (!(dt > 0)) throw std::invalid_argument("render_rigid_field: dt must be positive");

  FlowField out(depth.width(), depth.height(), dt);
  for (int py = 0; py < depth.height(); ++py) {
    const double y = intr.calib_y(py);
    for (int px = 0; px < depth.width(); ++px) {
      if (!depth.valid.at(px, py)) {
        out.u.at(px, py) = 0.0;
        out.v.at(px, py) = 0.0;
        out.valid.at(px, py) = 0;
        continue;
      }
      const Eigen::Vector2d f = rigid_flow_at(intr.calib_x(px), y, depth.z.at(px, py), vel);
      out.u.at(px, py) = f.x() * intr.fx * dt;
      out.v.at(px, py) = f.y() * intr.fy * dt;
      out.valid.at(px, py) = 1;
    }
  }
  return out;
}

FlowField compose_motion_field(const FlowField& rigid, const std::vector<ObjectField>& objects) {
  for (const ObjectField& obj : objects) {
    require_same_shape(rigid.u, obj.field.u, "compose_motion_field");
    require_same_shape(rigid.u, obj.region, "compose_motion_field");
    if (obj.field.dt != rigid.dt)
      throw UnitError("compose_motion_field: object field dt differs from rigid dt");
  }

  // Non-transparent objects: each pixel belongs to at most one region.
  if (objects.size() > 1) {
    MaskRaster covered(rigid.width(), rigid.height(), 0);
    for (const ObjectField& obj : objects) {
      for (size_t i = 0; i < covered.size(); ++i) {
        if (!obj.region[i]) continue;
        if (covered[i]) throw MaskOverlapError("compose_motion_field: object regions overlap");
        covered[i] = 1;
      }
    }
  }

  FlowField out = rigid;
  for (const ObjectField& obj : objects) {
    for (size_t i = 0; i < out.u.size(); ++i) {
      if (!obj.region[i]) continue;
      out.u[i] += obj.field.u[i];
      out.v[i] += obj.field.v[i];
      out.valid[i] = out.valid[i] && obj.field.valid[i];
    }
  }
  return out;
}

DepthMap clip_depth(const DepthMap& depth, double z_max) {
  if (!(z_max > 0)) throw std::invalid_argument("clip_depth: z_max must be positive");
  DepthMap out = depth;
  for (size_t i = 0; i < out.z.size(); ++i) {
    if (out.valid[i] && !(out.z[i] > 0 && out.z[i] <= z_max)) out.valid[i] = 0;
  }
  return out;
}

}  // namespace evseg
