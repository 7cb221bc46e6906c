#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evseg/config.hpp"
#include "evseg/events.hpp"
#include "evseg/geometry.hpp"
#include "evseg/labeler.hpp"

namespace evseg {

// Axis-aligned box [x0, x1) x [y0, y1) or a disk, in pixel coordinates.
struct Region {
  enum class Kind { box, disk };
  Kind kind = Kind::box;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // box
  double cx = 0, cy = 0, radius = 0;      // disk

  bool contains(int px, int py) const;
  static Region box(double x0, double y0, double x1, double y1);
  static Region disk(double cx, double cy, double radius);
};

struct ObjectSpec {
  Region region;
  // Twist whose motion field is added to the rigid field inside the
  // region; it is rendered with rigid_flow_at over the object's depth, so
  // it plays the role of the object's apparent relative motion.
  CameraVelocity twist;
  double depth_offset = 0;  // added to scene depth inside the region (m)
};

struct DepthModel {
  enum class Kind { constant, plane, textured };
  Kind kind = Kind::constant;
  double z = 2.0;                     // constant
  double z0 = 2.0, gx = 0, gy = 0;    // plane: z0 + gx*nx + gy*ny, n in [-0.5, 0.5]
  double z_min = 1.0, z_max = 2.5;    // textured: per-pixel uniform
};

struct SceneSpec {
  CameraIntrinsics intrinsics{100.0, 100.0, 80.0, 60.0, 160, 120};
  DepthModel depth;
  CameraVelocity camera_velocity;
  std::vector<ObjectSpec> objects;
  double flow_noise_sigma = 0;        // pixels
  double event_texture_density = 0.15;
  double dt = 0.025;                  // slice duration (s)
  uint64_t rng_seed = 42;
};

// Everything the pipeline consumes plus the ground truth to verify it.
struct GroundTruthBundle {
  FlowField flow;        // composed + noise: the pipeline input
  FlowField clean_flow;  // composed, noise-free
  FlowField rigid_flow;  // camera-induced field only
  DepthMap depth;
  LabelMask imo_mask;    // ground truth: imo exactly on the object regions
  EventSlice events;
  CameraVelocity camera_velocity;
};

// Deterministic per seed. Throws MaskOverlapError on overlapping regions
// and std::invalid_argument when any depth becomes non-positive.
GroundTruthBundle generate(const SceneSpec& spec);

// Scene-spec file: "key = value" lines with repeated [object] sections.
SceneSpec parse_scene_spec(const std::string& text);
SceneSpec load_scene_spec(const std::filesystem::path& path);

// One estimate->label->evaluate pipeline outcome.
struct SweepRow {
  int scene = 0;
  bool failed = false;       // egomotion estimation failed; slice skipped
  bool has_object = false;
  double egomotion_error = 0;  // sup-norm over the 6 twist components
  int64_t inlier_count = 0;
  double inlier_fraction = 0;
  bool accepted = false;
  RejectionReason reason = RejectionReason::none;
  double threshold = 0;
  std::optional<double> iou;  // event-masked, empty when no mask or no object
  bool detected = false;      // iou >= 0.3
};

// Runs the full pipeline on every scene; per-scene failures become rows
// flagged failed rather than aborting. Scene seeds are split from each
// spec's seed by index. Throws std::invalid_argument on an empty list.
std::vector<SweepRow> sweep(const std::vector<SceneSpec>& specs, const PipelineConfig& cfg);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace evseg
