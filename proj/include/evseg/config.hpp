#pragma once

#include <filesystem>
#include <string>

#include "evseg/egomotion.hpp"
#include "evseg/geometry.hpp"

namespace evseg {

struct LabelerConfig {
  double clip_value = 10.0;     // residual histogram clip (pixels)
  int bins = 256;
  double eps_total_var = 4.0;   // stage-1 filter (pixels^2)
  double eps_separation = 0.25; // stage-2 filter (pixels^2)
  int morph_radius = 1;
  // Stage 1 rejects slices whose total variance compares against
  // eps_total_var in this direction (true: reject above).
  bool reject_total_var_above = true;
};

struct EventConfig {
  int bins = 15;
  double slice_period = 0.025;  // seconds, 40 Hz
};

struct PipelineConfig {
  CameraIntrinsics intrinsics{100.0, 100.0, 80.0, 60.0, 160, 120};
  RansacConfig ransac;
  LabelerConfig labeler;
  EventConfig events;
  double depth_z_max = 3.0;  // meters

  void validate() const;
};

// Parses "section.key = value" lines; '#' starts a comment. Missing keys
// keep their defaults; unknown keys and malformed or out-of-range values
// raise ConfigError naming the key.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace evseg
