#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "evseg/io.hpp"
#include "evseg/simulator.hpp"

using namespace evseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("evseg_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(EVSEG_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_capture(const std::string& args, const fs::path& stdout_file) {
  const std::string cmd = std::string(EVSEG_CLI_PATH) + " " + args + " >" +
                          stdout_file.string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

const char* kMovingScene =
    "depth.model = textured\n"
    "depth.z_min = 0.8\n"
    "depth.z_max = 2.5\n"
    "camera.vx = 0.2\n"
    "camera.vy = -0.1\n"
    "camera.vz = 0.15\n"
    "camera.wx = 0.1\n"
    "camera.wz = 0.3\n"
    "events.density = 0.2\n"
    "seed = 42\n"
    "[object]\n"
    "region = box 30 30 90 80\n"
    "vx = 1.6\n"
    "vy = -0.8\n"
    "depth_offset = -0.3\n";

const char* kRigidScene =
    "depth.model = textured\n"
    "depth.z_min = 0.8\n"
    "depth.z_max = 2.5\n"
    "camera.vx = 0.2\n"
    "camera.vz = 0.1\n"
    "camera.wy = 0.2\n"
    "noise.sigma = 0.05\n"
    "events.density = 0.2\n"
    "seed = 7\n";

}  // namespace

TEST_CASE("cli: simulate then egomotion recovers the spec velocity") {
  TempDir dir;
  write_text(dir.path / "scene.txt", kMovingScene);  // noiseless flow
  REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
              (dir.path / "scene").string()) == 0);
  REQUIRE(run("egomotion --flow " + (dir.path / "scene/flow.evr").string() + " --depth " +
              (dir.path / "scene/depth.evr").string() + " --out " +
              (dir.path / "trace.csv").string()) == 0);

  std::ifstream in(dir.path / "trace.csv");
  std::string header, row;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, row));
  std::replace(row.begin(), row.end(), ',', ' ');
  std::istringstream fields(row);
  double t, vx, vy, vz, wx, wy, wz, inlier;
  std::string status;
  REQUIRE((fields >> t >> vx >> vy >> vz >> wx >> wy >> wz >> inlier >> status));
  CHECK(status == "ok");
  // f32 flow rasters quantize the noiseless flow; 1e-6 absorbs that.
  CHECK(std::abs(vx - 0.2) <= 1e-6);
  CHECK(std::abs(vy - -0.1) <= 1e-6);
  CHECK(std::abs(vz - 0.15) <= 1e-6);
  CHECK(std::abs(wx - 0.1) <= 1e-6);
  CHECK(std::abs(wy - 0.0) <= 1e-6);
  CHECK(std::abs(wz - 0.3) <= 1e-6);
}

TEST_CASE("cli: rigid-only scene reports inlier fraction 1.0") {
  TempDir dir;
  std::string scene(kRigidScene);
  scene.replace(scene.find("noise.sigma = 0.05"), 18, "noise.sigma = 0.00");
  write_text(dir.path / "scene.txt", scene);
  REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
              (dir.path / "scene").string()) == 0);
  REQUIRE(run("egomotion --flow " + (dir.path / "scene/flow.evr").string() + " --depth " +
              (dir.path / "scene/depth.evr").string() + " --out " +
              (dir.path / "trace.csv").string()) == 0);
  const std::string csv = slurp(dir.path / "trace.csv");
  CHECK(csv.find(",1,ok") != std::string::npos);
}

TEST_CASE("cli: label on a moving scene scores IoU >= 0.9 against ground truth") {
  TempDir dir;
  write_text(dir.path / "scene.txt", kMovingScene);
  REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
              (dir.path / "scene").string()) == 0);
  REQUIRE(run("label --flow " + (dir.path / "scene/flow.evr").string() + " --depth " +
              (dir.path / "scene/depth.evr").string() + " --out-mask " +
              (dir.path / "pred.evr").string() + " --out-meta " +
              (dir.path / "meta.txt").string()) == 0);
  const auto meta = parse_key_values(slurp(dir.path / "meta.txt"));
  CHECK(meta.at("accepted") == "true");

  REQUIRE(run_capture("eval --gt-mask " + (dir.path / "scene/gt_mask.evr").string() +
                          " --pred-mask " + (dir.path / "pred.evr").string() + " --events " +
                          (dir.path / "scene/events.evb").string() + " --out " +
                          (dir.path / "iou.csv").string(),
                      dir.path / "eval.out") == 0);
  std::ifstream in(dir.path / "iou.csv");
  std::string header, row;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, row));
  const double iou = std::stod(row.substr(row.find(',') + 1));
  CHECK(iou >= 0.9);
}

TEST_CASE("cli: all-rigid scene is rejected by the separation filter with a skip record") {
  TempDir dir;
  write_text(dir.path / "scene.txt", kRigidScene);
  REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
              (dir.path / "scene").string()) == 0);
  REQUIRE(run("label --flow " + (dir.path / "scene/flow.evr").string() + " --depth " +
              (dir.path / "scene/depth.evr").string() + " --out-mask " +
              (dir.path / "pred.evr").string() + " --out-meta " +
              (dir.path / "meta.txt").string()) == 0);
  const auto meta = parse_key_values(slurp(dir.path / "meta.txt"));
  CHECK(meta.at("accepted") == "false");
  CHECK(meta.at("rejection_reason") == "separation_too_low");
  CHECK_FALSE(fs::exists(dir.path / "pred.evr"));  // slice skipped, no mask
}

TEST_CASE("cli: noise-swamped flow is rejected by the total-variance filter") {
  TempDir dir;
  // Rigid scene whose flow is wrecked on 65% of the pixels; RANSAC still
  // finds the rigid consensus but the residual histogram is hopeless.
  SceneSpec spec;
  spec.depth.kind = DepthModel::Kind::textured;
  spec.depth.z_min = 0.8;
  spec.depth.z_max = 2.5;
  spec.camera_velocity.v = Eigen::Vector3d(0.2, 0, 0.1);
  spec.rng_seed = 11;
  GroundTruthBundle bundle = generate(spec);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> junk(-12.0, 12.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (size_t i = 0; i < bundle.flow.u.size(); ++i) {
    if (coin(rng) < 0.65) {
      bundle.flow.u[i] = junk(rng);
      bundle.flow.v[i] = junk(rng);
    }
  }
  save_flow(dir.path / "flow.evr", bundle.flow);
  save_depth(dir.path / "depth.evr", bundle.depth);

  REQUIRE(run("label --flow " + (dir.path / "flow.evr").string() + " --depth " +
              (dir.path / "depth.evr").string() + " --out-mask " +
              (dir.path / "pred.evr").string() + " --out-meta " +
              (dir.path / "meta.txt").string()) == 0);
  const auto meta = parse_key_values(slurp(dir.path / "meta.txt"));
  CHECK(meta.at("accepted") == "false");
  CHECK(meta.at("rejection_reason") == "total_variance_too_high");
}

TEST_CASE("cli: batch mode labels a directory of slices in order") {
  TempDir dir;
  fs::create_directories(dir.path / "flow");
  fs::create_directories(dir.path / "depth");
  SceneSpec spec;
  spec.depth.kind = DepthModel::Kind::textured;
  spec.depth.z_min = 0.8;
  spec.depth.z_max = 2.5;
  spec.camera_velocity.v = Eigen::Vector3d(0.3, 0, 0);
  ObjectSpec obj;
  obj.region = Region::box(40, 40, 100, 90);
  obj.twist.v = Eigen::Vector3d(1.5, 0, 0);
  spec.objects.push_back(obj);
  for (int i = 0; i < 3; ++i) {
    spec.rng_seed = 100 + i;
    const GroundTruthBundle bundle = generate(spec);
    char name[16];
    std::snprintf(name, sizeof name, "%03d.evr", i);
    save_flow(dir.path / "flow" / name, bundle.flow);
    save_depth(dir.path / "depth" / name, bundle.depth);
  }
  REQUIRE(run("label --flow " + (dir.path / "flow").string() + " --depth " +
              (dir.path / "depth").string() + " --out-mask " + (dir.path / "masks").string() +
              " --out-meta " + (dir.path / "meta.txt").string()) == 0);
  for (int i = 0; i < 3; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%03d.evr", i);
    CHECK(fs::exists(dir.path / "masks" / name));
  }
  const std::string meta = slurp(dir.path / "meta.txt");
  CHECK(meta.find("slice = 0") < meta.find("slice = 1"));
  CHECK(meta.find("slice = 1") < meta.find("slice = 2"));
}

TEST_CASE("cli: identical invocations produce byte-identical outputs") {
  TempDir dir;
  write_text(dir.path / "scene.txt", kMovingScene);
  for (const char* out : {"a", "b"}) {
    REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
                (dir.path / out).string()) == 0);
    REQUIRE(run("label --flow " + (dir.path / out / "flow.evr").string() + " --depth " +
                (dir.path / out / "depth.evr").string() + " --out-mask " +
                (dir.path / out / "pred.evr").string() + " --out-meta " +
                (dir.path / out / "meta.txt").string()) == 0);
  }
  CHECK(slurp(dir.path / "a/flow.evr") == slurp(dir.path / "b/flow.evr"));
  CHECK(slurp(dir.path / "a/events.evb") == slurp(dir.path / "b/events.evb"));
  CHECK(slurp(dir.path / "a/pred.evr") == slurp(dir.path / "b/pred.evr"));
  CHECK(slurp(dir.path / "a/meta.txt") == slurp(dir.path / "b/meta.txt"));
}

TEST_CASE("cli: volume from CSV and binary events is identical, empty file is zero") {
  TempDir dir;
  write_text(dir.path / "scene.txt", kMovingScene);
  REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
              (dir.path / "scene").string()) == 0);
  const std::vector<Event> events = read_events_binary(dir.path / "scene/events.evb");
  write_events_csv(dir.path / "events.csv", events);

  REQUIRE(run("volume --events " + (dir.path / "scene/events.evb").string() + " --out " +
              (dir.path / "vol_bin.evr").string()) == 0);
  REQUIRE(run("volume --events " + (dir.path / "events.csv").string() + " --out " +
              (dir.path / "vol_csv.evr").string()) == 0);
  CHECK(slurp(dir.path / "vol_bin.evr") == slurp(dir.path / "vol_csv.evr"));

  write_events_binary(dir.path / "empty.evb", {});
  REQUIRE(run("volume --events " + (dir.path / "empty.evb").string() + " --out " +
              (dir.path / "vol_empty.evr").string()) == 0);
  const RasterF32 vol = read_raster_f32(dir.path / "vol_empty.evr");
  CHECK(vol.channels == 15);  // default event volume depth
  for (float v : vol.data) REQUIRE(v == 0.0f);
}

TEST_CASE("cli: eval of a mask against itself prints 100±0") {
  TempDir dir;
  write_text(dir.path / "scene.txt", kMovingScene);
  REQUIRE(run("simulate --spec " + (dir.path / "scene.txt").string() + " --out " +
              (dir.path / "scene").string()) == 0);
  REQUIRE(run_capture("eval --gt-mask " + (dir.path / "scene/gt_mask.evr").string() +
                          " --pred-mask " + (dir.path / "scene/gt_mask.evr").string() +
                          " --events " + (dir.path / "scene/events.evb").string() + " --out " +
                          (dir.path / "iou.csv").string(),
                      dir.path / "eval.out") == 0);
  CHECK(slurp(dir.path / "eval.out").find("100±0") != std::string::npos);
}

TEST_CASE("cli: exit code contract") {
  TempDir dir;
  CHECK(run("label --flow nope.evr --depth nope.evr --out-mask a --out-meta b") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("label") == 2);  // missing required flags
  write_text(dir.path / "bad_scene.txt", "bogus.key = 1\n");
  CHECK(run("simulate --spec " + (dir.path / "bad_scene.txt").string() + " --out " +
            (dir.path / "out").string()) == 2);
  write_text(dir.path / "bad_config.txt", "unknown.key = 1\n");
  write_text(dir.path / "scene.txt", kRigidScene);
  CHECK(run("--config " + (dir.path / "bad_config.txt").string() + " simulate --spec " +
            (dir.path / "scene.txt").string() + " --out " + (dir.path / "out").string()) == 2);
}
