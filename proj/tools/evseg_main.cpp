// evseg: geometric IMO pseudo-labeling pipeline over flow + depth rasters.
//
// Subcommands: simulate, egomotion, label, volume, eval. Exit codes are a
// stable contract: 0 success, 1 internal/numeric failure, 2 usage or input
// parse failure.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <thread>
#include <vector>

#include "evseg/config.hpp"
#include "evseg/egomotion.hpp"
#include "evseg/errors.hpp"
#include "evseg/events.hpp"
#include "evseg/io.hpp"
#include "evseg/labeler.hpp"
#include "evseg/metrics.hpp"
#include "evseg/simulator.hpp"

namespace fs = std::filesystem;
using namespace evseg;

namespace {

// A path argument can name one slice file or a directory of them.
std::vector<fs::path> list_inputs(const fs::path& path) {
  if (fs::is_regular_file(path)) return {path};
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw ParseError(ParseError::Kind::io, "no input files in " + path.string());
    return files;
  }
  throw ParseError(ParseError::Kind::io, "no such file or directory: " + path.string());
}

fs::path matching_input(const fs::path& base, const fs::path& reference) {
  return fs::is_directory(base) ? base / reference.filename() : base;
}

// Runs fn(0..n-1) on a bounded pool, committing results in input order.
template <typename Result, typename Fn, typename Commit>
void ordered_parallel_for(size_t n, unsigned threads, Fn&& fn, Commit&& commit) {
  threads = std::max(1u, threads);
  const size_t chunk = std::max<size_t>(1, 2 * threads);
  for (size_t begin = 0; begin < n; begin += chunk) {
    const size_t end = std::min(n, begin + chunk);
    std::vector<std::future<Result>> futures;
    for (size_t i = begin; i < end; ++i)
      futures.push_back(std::async(std::launch::async, fn, i));
    for (size_t i = begin; i < end; ++i) commit(i, futures[i - begin].get());
  }
}

RansacConfig slice_ransac_config(const PipelineConfig& cfg, size_t slice_index) {
  RansacConfig ransac = cfg.ransac;
  ransac.rng_seed = cfg.ransac.rng_seed + slice_index;
  return ransac;
}

struct SliceOutcome {
  bool failed = false;           // egomotion estimation failed
  ThresholdDecision decision;
  std::optional<LabelMask> mask;
  CameraVelocity velocity;
  double inlier_fraction = 0;
  double ms = 0;
};

SliceOutcome run_label_slice(const FlowField& flow, const DepthMap& raw_depth,
                             const PipelineConfig& cfg, size_t index, double slice_time) {
  const auto start = std::chrono::steady_clock::now();
  SliceOutcome out;
  const DepthMap depth = clip_depth(raw_depth, cfg.depth_z_max);
  try {
    const EgomotionEstimate est =
        estimate_egomotion(flow, depth, cfg.intrinsics, slice_ransac_config(cfg, index));
    out.velocity = est.velocity;
    int64_t n_valid = 0;
    for (size_t i = 0; i < depth.valid.size(); ++i)
      n_valid += (depth.valid[i] && flow.valid[i]);
    out.inlier_fraction =
        n_valid > 0 ? static_cast<double>(est.inlier_count) / static_cast<double>(n_valid) : 0.0;

    const FlowField rigid = render_rigid_field(depth, est.velocity, cfg.intrinsics, flow.dt);
    const ResidualField res = residual_field(flow, rigid);
    const ResidualHistogram hist =
        build_histogram(res, cfg.labeler.bins, cfg.labeler.clip_value);
    out.decision = decide_threshold(hist, cfg.labeler.eps_total_var, cfg.labeler.eps_separation,
                                    cfg.labeler.reject_total_var_above);
    if (out.decision.accepted) {
      LabelMask mask = make_label_mask(res, out.decision, slice_time);
      out.mask = morphological_close(mask, cfg.labeler.morph_radius);
    }
  } catch (const EstimationFailed&) {
    out.failed = true;
  }
  out.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
               .count();
  return out;
}

std::string outcome_meta(const SliceOutcome& out, size_t index, double slice_time) {
  if (out.failed) {
    std::ostringstream meta;
    meta.precision(17);
    meta << "slice = " << index << "\nslice_time = " << slice_time
         << "\nfailed = true\naccepted = false\n";
    return meta.str();
  }
  LabelMask stub;
  stub.decision = out.decision;
  stub.slice_time = slice_time;
  return format_mask_meta(out.mask ? *out.mask : stub, static_cast<int>(index));
}

int cmd_simulate(const fs::path& spec_path, const fs::path& out_dir,
                 std::optional<uint64_t> seed) {
  SceneSpec spec = load_scene_spec(spec_path);
  if (seed) spec.rng_seed = *seed;
  const GroundTruthBundle bundle = generate(spec);

  fs::create_directories(out_dir);
  save_flow(out_dir / "flow.evr", bundle.flow);
  save_flow(out_dir / "clean_flow.evr", bundle.clean_flow);
  save_flow(out_dir / "rigid_flow.evr", bundle.rigid_flow);
  save_depth(out_dir / "depth.evr", bundle.depth);
  save_label_raster(out_dir / "gt_mask.evr", bundle.imo_mask.label);
  write_events_binary(out_dir / "events.evb", bundle.events.events);

  std::ofstream meta(out_dir / "scene.txt");
  meta.precision(17);
  meta << "seed = " << spec.rng_seed << "\n"
       << "dt = " << spec.dt << "\n"
       << "width = " << spec.intrinsics.width << "\n"
       << "height = " << spec.intrinsics.height << "\n"
       << "camera.vx = " << spec.camera_velocity.v.x() << "\n"
       << "camera.vy = " << spec.camera_velocity.v.y() << "\n"
       << "camera.vz = " << spec.camera_velocity.v.z() << "\n"
       << "camera.wx = " << spec.camera_velocity.omega.x() << "\n"
       << "camera.wy = " << spec.camera_velocity.omega.y() << "\n"
       << "camera.wz = " << spec.camera_velocity.omega.z() << "\n"
       << "objects = " << spec.objects.size() << "\n"
       << "events = " << bundle.events.events.size() << "\n";
  std::cerr << "[simulate] wrote scene to " << out_dir.string() << " ("
            << bundle.events.events.size() << " events)\n";
  return 0;
}

int cmd_egomotion(const fs::path& flow_path, const fs::path& depth_path,
                  const PipelineConfig& cfg, const fs::path& out_csv, unsigned threads) {
  const std::vector<fs::path> flows = list_inputs(flow_path);
  std::vector<VelocityTraceRow> rows(flows.size());

  ordered_parallel_for<VelocityTraceRow>(
      flows.size(), threads,
      [&](size_t i) {
        const double t = static_cast<double>(i) * cfg.events.slice_period;
        VelocityTraceRow row;
        row.t = t;
        const FlowField flow = load_flow(flows[i], cfg.events.slice_period);
        const DepthMap depth =
            clip_depth(load_depth(matching_input(depth_path, flows[i])), cfg.depth_z_max);
        try {
          const EgomotionEstimate est =
              estimate_egomotion(flow, depth, cfg.intrinsics, slice_ransac_config(cfg, i));
          row.velocity = est.velocity;
          int64_t n_valid = 0;
          for (size_t j = 0; j < depth.valid.size(); ++j)
            n_valid += (depth.valid[j] && flow.valid[j]);
          row.inlier_fraction =
              n_valid > 0 ? static_cast<double>(est.inlier_count) / static_cast<double>(n_valid)
                          : 0.0;
        } catch (const EstimationFailed&) {
          row.failed = true;
        }
        return row;
      },
      [&](size_t i, VelocityTraceRow row) {
        rows[i] = row;
        std::cerr << "[egomotion] slice=" << i << " status=" << (row.failed ? "failed" : "ok")
                  << " inlier_fraction=" << row.inlier_fraction << "\n";
      });

  std::ofstream out(out_csv);
  if (!out) throw ParseError(ParseError::Kind::io, "cannot write " + out_csv.string());
  out << velocity_trace_csv(rows);
  return 0;
}

int cmd_label(const fs::path& flow_path, const fs::path& depth_path, const PipelineConfig& cfg,
              const fs::path& out_mask, const fs::path& out_meta, unsigned threads) {
  const std::vector<fs::path> flows = list_inputs(flow_path);
  const bool dir_mode = flows.size() > 1 || fs::is_directory(flow_path);
  if (dir_mode) fs::create_directories(out_mask);

  std::ofstream meta(out_meta);
  if (!meta) throw ParseError(ParseError::Kind::io, "cannot write " + out_meta.string());
  meta.precision(17);

  const auto wall_start = std::chrono::steady_clock::now();
  ordered_parallel_for<SliceOutcome>(
      flows.size(), threads,
      [&](size_t i) {
        const FlowField flow = load_flow(flows[i], cfg.events.slice_period);
        const DepthMap depth = load_depth(matching_input(depth_path, flows[i]));
        return run_label_slice(flow, depth, cfg, i,
                               static_cast<double>(i) * cfg.events.slice_period);
      },
      [&](size_t i, SliceOutcome out) {
        const double t = static_cast<double>(i) * cfg.events.slice_period;
        if (out.mask) {
          const fs::path mask_path = dir_mode ? out_mask / flows[i].filename() : out_mask;
          save_label_raster(mask_path, out.mask->label);
        }
        meta << outcome_meta(out, i, t) << "\n";
        std::cerr << "[label] slice=" << i << " ms=" << out.ms
                  << " status=" << (out.failed ? "failed" : "ok")
                  << " accepted=" << (out.mask ? 1 : 0)
                  << " reason=" << to_string(out.decision.rejection_reason)
                  << " threshold=" << out.decision.threshold
                  << " inlier_fraction=" << out.inlier_fraction << "\n";
      });
  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  std::cerr << "[label] slices=" << flows.size() << " wall_s=" << wall_s
            << " rate_slices_per_s=" << static_cast<double>(flows.size()) / wall_s << "\n";
  return 0;
}

int cmd_volume(const fs::path& events_path, const PipelineConfig& cfg, const fs::path& out_path) {
  const std::vector<Event> events = read_events_auto(events_path);

  EventSlice slice;
  slice.events = events;
  if (events.empty()) {
    slice.t_start = 0;
    slice.t_end = cfg.events.slice_period;
  } else {
    slice.t_start = events.front().t;
    slice.t_end = std::max(slice.t_start + cfg.events.slice_period,
                           std::nextafter(events.back().t, INFINITY));
  }
  const EventVolume vol =
      build_volume(slice, cfg.events.bins, cfg.intrinsics.width, cfg.intrinsics.height);

  double polarity_sum = 0;
  for (const Event& e : events) polarity_sum += e.p;
  const double mass = vol.sum();
  std::cerr << "[volume] events=" << events.size() << " mass=" << mass
            << " polarity_sum=" << polarity_sum << "\n";
  if (std::abs(mass - polarity_sum) > 1e-6 * std::max(1.0, std::abs(polarity_sum)))
    throw std::runtime_error("volume mass-conservation check failed");

  save_volume(out_path, vol);
  return 0;
}

int cmd_eval(const fs::path& gt_path, const fs::path& pred_path, const fs::path& events_path,
             const PipelineConfig& cfg, const fs::path& out_csv, double iou_threshold) {
  const std::vector<fs::path> gt_files = list_inputs(gt_path);
  const std::vector<Event> events = read_events_auto(events_path);
  const int w = cfg.intrinsics.width, h = cfg.intrinsics.height;

  // Single-input mode projects the whole event file; directory mode slices
  // it on the evaluation grid, slice i pairing with the i-th mask.
  std::vector<MaskRaster> event_rasters;
  if (gt_files.size() == 1) {
    event_rasters.push_back(project_events({events, 0, 1}, w, h));
  } else {
    const auto slices = slice_stream(events, cfg.events.slice_period);
    for (size_t i = 0; i < gt_files.size(); ++i)
      event_rasters.push_back(i < slices.size() ? project_events(slices[i], w, h)
                                                : MaskRaster(w, h, 0));
  }

  std::vector<std::pair<double, std::optional<double>>> per_slice;
  for (size_t i = 0; i < gt_files.size(); ++i) {
    const Raster<uint8_t> gt_label = load_label_raster(gt_files[i]);
    MaskRaster gt(gt_label.width(), gt_label.height(), 0);
    for (size_t j = 0; j < gt.size(); ++j)
      gt[j] = gt_label[j] == static_cast<uint8_t>(Label::imo);

    // A slice the labeler skipped predicts nothing: missing mask files are
    // scored as all-background so skipped slices count as misses.
    MaskRaster pred(gt_label.width(), gt_label.height(), 0);
    const fs::path pred_file = matching_input(pred_path, gt_files[i]);
    if (fs::exists(pred_file)) {
      const Raster<uint8_t> pred_label = load_label_raster(pred_file);
      for (size_t j = 0; j < pred.size(); ++j)
        pred[j] = pred_label[j] == static_cast<uint8_t>(Label::imo);
    }
    per_slice.emplace_back(static_cast<double>(i) * cfg.events.slice_period,
                           event_masked_iou(gt, pred, event_rasters[i]));
  }

  const IoUReport report = IoUReport::build(per_slice, iou_threshold);
  std::ofstream out(out_csv);
  if (!out) throw ParseError(ParseError::Kind::io, "cannot write " + out_csv.string());
  out << report.csv();

  std::cout << "iou " << report.summary() << " over " << report.evaluated
            << " slices, detection rate " << report.detection_rate << " at "
            << report.iou_threshold << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evseg: IMO pseudo-labels from optical flow and depth"};
  app.require_subcommand(1);
  app.footer("Environment: EVSEG_CONFIG overrides the default --config value.");

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config file")
      ->envname("EVSEG_CONFIG");

  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "worker pool size for per-slice commands");

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic scene bundle");
  std::string sim_spec, sim_out;
  uint64_t sim_seed = 0;
  bool sim_has_seed = false;
  simulate->add_option("--spec", sim_spec, "scene spec file")->required();
  simulate->add_option("--out", sim_out, "output directory")->required();
  simulate->add_option("--seed", sim_seed, "override the spec seed")
      ->each([&](const std::string&) { sim_has_seed = true; });

  auto* egomotion = app.add_subcommand("egomotion", "estimate per-slice camera velocity");
  std::string ego_flow, ego_depth, ego_out;
  egomotion->add_option("--flow", ego_flow, "flow raster or directory")->required();
  egomotion->add_option("--depth", ego_depth, "depth raster or directory")->required();
  egomotion->add_option("--out", ego_out, "velocity trace CSV")->required();

  auto* label = app.add_subcommand("label", "generate IMO pseudo-label masks");
  std::string label_flow, label_depth, label_mask, label_meta;
  label->add_option("--flow", label_flow, "flow raster or directory")->required();
  label->add_option("--depth", label_depth, "depth raster or directory")->required();
  label->add_option("--out-mask", label_mask, "mask file (or directory in batch mode)")
      ->required();
  label->add_option("--out-meta", label_meta, "per-slice decision metadata file")->required();

  auto* volume = app.add_subcommand("volume", "build an event volume tensor");
  std::string vol_events, vol_out;
  volume->add_option("--events", vol_events, "event file (binary or CSV)")->required();
  volume->add_option("--out", vol_out, "output raster file")->required();

  auto* eval = app.add_subcommand("eval", "event-masked IoU of predicted vs ground truth");
  std::string eval_gt, eval_pred, eval_events, eval_out;
  double eval_threshold = 0.3;
  eval->add_option("--gt-mask", eval_gt, "ground truth mask or directory")->required();
  eval->add_option("--pred-mask", eval_pred, "predicted mask or directory")->required();
  eval->add_option("--events", eval_events, "event file")->required();
  eval->add_option("--out", eval_out, "per-slice IoU CSV")->required();
  eval->add_option("--iou-threshold", eval_threshold, "detection threshold (default 0.3)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);

    if (simulate->parsed())
      return cmd_simulate(sim_spec, sim_out,
                          sim_has_seed ? std::optional<uint64_t>(sim_seed) : std::nullopt);
    if (egomotion->parsed()) return cmd_egomotion(ego_flow, ego_depth, cfg, ego_out, threads);
    if (label->parsed())
      return cmd_label(label_flow, label_depth, cfg, label_mask, label_meta, threads);
    if (volume->parsed()) return cmd_volume(vol_events, cfg, vol_out);
    if (eval->parsed()) return cmd_eval(eval_gt, eval_pred, eval_events, cfg, eval_out,
                                        eval_threshold);
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
