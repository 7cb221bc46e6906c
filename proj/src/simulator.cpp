#include "evseg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "evseg/egomotion.hpp"
#include "evseg/errors.hpp"
#include "evseg/metrics.hpp"

namespace evseg {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr int kEventsPerTexturePixel = 6;

}  // namespace

bool Region::contains(int px, int py) const {
  if (kind == Kind::box) return px >= x0 && px < x1 && py >= y0 && py < y1;
  const double dx = px - cx, dy = py - cy;
  return dx * dx + dy * dy <= radius * radius;
}

Region Region::box(double x0, double y0, double x1, double y1) {
  Region r;
  r.kind = Kind::box;
  r.x0 = x0; r.y0 = y0; r.x1 = x1; r.y1 = y1;
  return r;
}

Region Region::disk(double cx, double cy, double radius) {
  Region r;
  r.kind = Kind::disk;
  r.cx = cx; r.cy = cy; r.radius = radius;
  return r;
}

GroundTruthBundle generate(const SceneSpec& spec) {
  spec.intrinsics.validate();
  if (!(spec.dt > 0)) throw std::invalid_argument("scene: dt must be positive");
  if (!(spec.event_texture_density >= 0 && spec.event_texture_density <= 1))
    throw std::invalid_argument("scene: event_texture_density must lie in [0, 1]");
  if (spec.flow_noise_sigma < 0)
    throw std::invalid_argument("scene: flow_noise_sigma must be >= 0");

  const int w = spec.intrinsics.width, h = spec.intrinsics.height;

  // Region rasterization + disjointness (non-transparent objects).
  std::vector<MaskRaster> regions;
  MaskRaster covered(w, h, 0);
  for (const ObjectSpec& obj : spec.objects) {
    MaskRaster region(w, h, 0);
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px)
        if (obj.region.contains(px, py)) {
          if (covered.at(px, py))
            throw MaskOverlapError("scene: object regions overlap");
          covered.at(px, py) = 1;
          region.at(px, py) = 1;
        }
    regions.push_back(std::move(region));
  }

  // Depth.
  DepthMap depth(w, h);
  std::mt19937_64 depth_rng(splitmix64(spec.rng_seed ^ 0x01));
  switch (spec.depth.kind) {
    case DepthModel::Kind::constant:
      for (auto& z : depth.z) z = spec.depth.z;
      break;
    case DepthModel::Kind::plane:
      for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
          depth.z.at(px, py) = spec.depth.z0 +
                               spec.depth.gx * (static_cast<double>(px) / w - 0.5) +
                               spec.depth.gy * (static_cast<double>(py) / h - 0.5);
      break;
    case DepthModel::Kind::textured: {
      std::uniform_real_distribution<double> dist(spec.depth.z_min, spec.depth.z_max);
      for (auto& z : depth.z) z = dist(depth_rng);
      break;
    }
  }
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    const double offset = spec.objects[i].depth_offset;
    if (offset == 0) continue;
    for (size_t j = 0; j < depth.z.size(); ++j)
      if (regions[i][j]) depth.z[j] += offset;
  }
  for (double z : depth.z)
    if (!(z > 0)) throw std::invalid_argument("scene: depth must stay positive after offsets");

  GroundTruthBundle bundle;
  bundle.depth = depth;
  bundle.camera_velocity = spec.camera_velocity;
  bundle.rigid_flow = render_rigid_field(depth, spec.camera_velocity, spec.intrinsics, spec.dt);

  std::vector<ObjectField> object_fields;
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    ObjectField field;
    field.field = render_rigid_field(depth, spec.objects[i].twist, spec.intrinsics, spec.dt);
    field.region = regions[i];
    object_fields.push_back(std::move(field));
  }
  bundle.clean_flow = compose_motion_field(bundle.rigid_flow, object_fields);

  bundle.flow = bundle.clean_flow;
  if (spec.flow_noise_sigma > 0) {
    std::mt19937_64 noise_rng(splitmix64(spec.rng_seed ^ 0x02));
    std::normal_distribution<double> noise(0.0, spec.flow_noise_sigma);
    for (size_t i = 0; i < bundle.flow.u.size(); ++i) {
      if (!bundle.flow.valid[i]) continue;
      bundle.flow.u[i] += noise(noise_rng);
      bundle.flow.v[i] += noise(noise_rng);
    }
  }

  // Ground-truth mask: imo exactly on the object regions.
  bundle.imo_mask.label = Raster<uint8_t>(w, h, static_cast<uint8_t>(Label::background));
  for (size_t i = 0; i < covered.size(); ++i) {
    if (!depth.valid[i]) bundle.imo_mask.label[i] = static_cast<uint8_t>(Label::invalid);
    else if (covered[i]) bundle.imo_mask.label[i] = static_cast<uint8_t>(Label::imo);
  }
  bundle.imo_mask.decision.accepted = true;
  bundle.imo_mask.slice_time = 0;

  // Events: texture pixels slide along the local clean flow over the slice.
  std::mt19937_64 event_rng(splitmix64(spec.rng_seed ^ 0x03));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Event> events;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      if (unit(event_rng) >= spec.event_texture_density) continue;
      const double fu = bundle.clean_flow.u.at(px, py);
      const double fv = bundle.clean_flow.v.at(px, py);
      for (int k = 0; k < kEventsPerTexturePixel; ++k) {
        const double tau = unit(event_rng);
        const long ex = std::lround(px + fu * tau);
        const long ey = std::lround(py + fv * tau);
        const int8_t polarity = unit(event_rng) < 0.5 ? int8_t{-1} : int8_t{1};
        if (ex < 0 || ex >= w || ey < 0 || ey >= h) continue;
        events.push_back({tau * spec.dt, static_cast<uint16_t>(ex),
                          static_cast<uint16_t>(ey), polarity});
      }
    }
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.t < b.t; });
  bundle.events = {std::move(events), 0.0, spec.dt};

  return bundle;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

[[noreturn]] void fail_line(size_t line_no, const std::string& what) {
  throw ConfigError("scene spec line " + std::to_string(line_no) + ": " + what);
}

double spec_double(const std::string& value, size_t line_no) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) fail_line(line_no, "expected a number, got '" + value + "'");
    return v;
  } catch (const std::logic_error&) {
    fail_line(line_no, "expected a number, got '" + value + "'");
  }
}

Region parse_region(const std::string& value, size_t line_no) {
  std::istringstream in(value);
  std::string kind;
  in >> kind;
  if (kind == "box") {
    double x0, y0, x1, y1;
    if (!(in >> x0 >> y0 >> x1 >> y1)) fail_line(line_no, "box expects: box x0 y0 x1 y1");
    return Region::box(x0, y0, x1, y1);
  }
  if (kind == "disk") {
    double cx, cy, r;
    if (!(in >> cx >> cy >> r)) fail_line(line_no, "disk expects: disk cx cy r");
    return Region::disk(cx, cy, r);
  }
  fail_line(line_no, "region must be 'box ...' or 'disk ...'");
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec spec;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  ObjectSpec* object = nullptr;  // inside an [object] section

  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;

    if (stripped == "[object]") {
      spec.objects.emplace_back();
      object = &spec.objects.back();
      continue;
    }
    if (stripped.front() == '[') fail_line(line_no, "unknown section " + stripped);

    const auto eq = stripped.find('=');
    if (eq == std::string::npos) fail_line(line_no, "expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));

    if (object != nullptr) {
      if (key == "region") object->region = parse_region(value, line_no);
      else if (key == "vx") object->twist.v.x() = spec_double(value, line_no);
      else if (key == "vy") object->twist.v.y() = spec_double(value, line_no);
      else if (key == "vz") object->twist.v.z() = spec_double(value, line_no);
      else if (key == "wx") object->twist.omega.x() = spec_double(value, line_no);
      else if (key == "wy") object->twist.omega.y() = spec_double(value, line_no);
      else if (key == "wz") object->twist.omega.z() = spec_double(value, line_no);
      else if (key == "depth_offset") object->depth_offset = spec_double(value, line_no);
      else fail_line(line_no, "unknown object key '" + key + "'");
      continue;
    }

    if (key == "intrinsics.fx") spec.intrinsics.fx = spec_double(value, line_no);
    else if (key == "intrinsics.fy") spec.intrinsics.fy = spec_double(value, line_no);
    else if (key == "intrinsics.cx") spec.intrinsics.cx = spec_double(value, line_no);
    else if (key == "intrinsics.cy") spec.intrinsics.cy = spec_double(value, line_no);
    else if (key == "intrinsics.width") spec.intrinsics.width = static_cast<int>(spec_double(value, line_no));
    else if (key == "intrinsics.height") spec.intrinsics.height = static_cast<int>(spec_double(value, line_no));
    else if (key == "depth.model") {
      if (value == "constant") spec.depth.kind = DepthModel::Kind::constant;
      else if (value == "plane") spec.depth.kind = DepthModel::Kind::plane;
      else if (value == "textured") spec.depth.kind = DepthModel::Kind::textured;
      else fail_line(line_no, "depth.model must be constant, plane or textured");
    }
    else if (key == "depth.z") spec.depth.z = spec_double(value, line_no);
    else if (key == "depth.z0") spec.depth.z0 = spec_double(value, line_no);
    else if (key == "depth.gx") spec.depth.gx = spec_double(value, line_no);
    else if (key == "depth.gy") spec.depth.gy = spec_double(value, line_no);
    else if (key == "depth.z_min") spec.depth.z_min = spec_double(value, line_no);
    else if (key == "depth.z_max") spec.depth.z_max = spec_double(value, line_no);
    else if (key == "camera.vx") spec.camera_velocity.v.x() = spec_double(value, line_no);
    else if (key == "camera.vy") spec.camera_velocity.v.y() = spec_double(value, line_no);
    else if (key == "camera.vz") spec.camera_velocity.v.z() = spec_double(value, line_no);
    else if (key == "camera.wx") spec.camera_velocity.omega.x() = spec_double(value, line_no);
    else if (key == "camera.wy") spec.camera_velocity.omega.y() = spec_double(value, line_no);
    else if (key == "camera.wz") spec.camera_velocity.omega.z() = spec_double(value, line_no);
    else if (key == "noise.sigma") spec.flow_noise_sigma = spec_double(value, line_no);
    else if (key == "events.density") spec.event_texture_density = spec_double(value, line_no);
    else if (key == "slice.dt") spec.dt = spec_double(value, line_no);
    else if (key == "seed") spec.rng_seed = static_cast<uint64_t>(spec_double(value, line_no));
    else fail_line(line_no, "unknown key '" + key + "'");
  }
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene spec " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scene_spec(buffer.str());
}

std::vector<SweepRow> sweep(const std::vector<SceneSpec>& specs, const PipelineConfig& cfg) {
  if (specs.empty()) throw std::invalid_argument("sweep: empty scene list");

  std::vector<SweepRow> rows;
  for (size_t i = 0; i < specs.size(); ++i) {
    SceneSpec spec = specs[i];
    spec.rng_seed = splitmix64(spec.rng_seed + i);

    SweepRow row;
    row.scene = static_cast<int>(i);

    const GroundTruthBundle bundle = generate(spec);
    const DepthMap depth = clip_depth(bundle.depth, cfg.depth_z_max);
    const MaskRaster gt_imo = label_equals(bundle.imo_mask, Label::imo);
    row.has_object = std::any_of(gt_imo.begin(), gt_imo.end(), [](uint8_t v) { return v != 0; });

    int64_t n_valid = 0;
    for (size_t j = 0; j < depth.valid.size(); ++j)
      n_valid += (depth.valid[j] && bundle.flow.valid[j]);

    try {
      const EgomotionEstimate est =
          estimate_egomotion(bundle.flow, depth, spec.intrinsics, cfg.ransac);
      row.inlier_count = est.inlier_count;
      row.inlier_fraction =
          n_valid > 0 ? static_cast<double>(est.inlier_count) / static_cast<double>(n_valid) : 0.0;
      row.egomotion_error =
          (est.velocity.stacked() - bundle.camera_velocity.stacked()).cwiseAbs().maxCoeff();

      const FlowField rigid =
          render_rigid_field(depth, est.velocity, spec.intrinsics, spec.dt);
      const ResidualField res = residual_field(bundle.flow, rigid);
      const ResidualHistogram hist =
          build_histogram(res, cfg.labeler.bins, cfg.labeler.clip_value);
      const ThresholdDecision decision =
          decide_threshold(hist, cfg.labeler.eps_total_var, cfg.labeler.eps_separation,
                           cfg.labeler.reject_total_var_above);
      row.accepted = decision.accepted;
      row.reason = decision.rejection_reason;
      row.threshold = decision.threshold;

      if (decision.accepted) {
        LabelMask mask = make_label_mask(res, decision, 0.0);
        mask = morphological_close(mask, cfg.labeler.morph_radius);
        const MaskRaster events = project_events(bundle.events, spec.intrinsics.width,
                                                 spec.intrinsics.height);
        row.iou = event_masked_iou(gt_imo, label_equals(mask, Label::imo), events);
        row.detected = row.iou.has_value() && *row.iou >= 0.3;
      }
    } catch (const EstimationFailed&) {
      row.failed = true;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "scene,status,has_object,egomotion_error,inlier_count,inlier_fraction,"
         "accepted,reason,threshold,iou,detected\n";
  for (const SweepRow& r : rows) {
    out << r.scene << ',' << (r.failed ? "failed" : "ok") << ','
        << (r.has_object ? 1 : 0) << ',';
    if (!r.failed)
      out << r.egomotion_error << ',' << r.inlier_count << ',' << r.inlier_fraction << ','
          << (r.accepted ? 1 : 0) << ',' << to_string(r.reason) << ',' << r.threshold << ',';
    else
      out << ",,,,,";
    if (r.iou.has_value()) out << *r.iou;
    out << ',' << (r.detected ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace evseg
