#include "evseg/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "evseg/errors.hpp"

namespace evseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0;
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
  return v;
}

long parse_int(const std::string& key, const std::string& value) {
  long v = 0;
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  uint64_t v = 0;
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + value + "'");
}

void require(bool ok, const std::string& key, const char* what) {
  if (!ok) throw ConfigError("config key '" + key + "' out of range: " + what);
}

void apply(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "intrinsics.fx") {
    cfg.intrinsics.fx = parse_double(key, value);
    require(cfg.intrinsics.fx > 0, key, "must be positive");
  } else if (key == "intrinsics.fy") {
    cfg.intrinsics.fy = parse_double(key, value);
    require(cfg.intrinsics.fy > 0, key, "must be positive");
  } else if (key == "intrinsics.cx") {
    cfg.intrinsics.cx = parse_double(key, value);
  } else if (key == "intrinsics.cy") {
    cfg.intrinsics.cy = parse_double(key, value);
  } else if (key == "intrinsics.width") {
    cfg.intrinsics.width = static_cast<int>(parse_int(key, value));
    require(cfg.intrinsics.width > 0, key, "must be positive");
  } else if (key == "intrinsics.height") {
    cfg.intrinsics.height = static_cast<int>(parse_int(key, value));
    require(cfg.intrinsics.height > 0, key, "must be positive");
  } else if (key == "ransac.max_iterations") {
    cfg.ransac.max_iterations = static_cast<int>(parse_int(key, value));
    require(cfg.ransac.max_iterations >= 1, key, "must be >= 1");
  } else if (key == "ransac.stop_probability") {
    cfg.ransac.stop_probability = parse_double(key, value);
    require(cfg.ransac.stop_probability > 0 && cfg.ransac.stop_probability < 1, key,
            "must lie in (0, 1)");
  } else if (key == "ransac.sample_size") {
    cfg.ransac.sample_size = static_cast<int>(parse_int(key, value));
    require(cfg.ransac.sample_size >= 3, key, "must be >= 3");
  } else if (key == "ransac.inlier_threshold") {
    cfg.ransac.inlier_threshold = parse_double(key, value);
    require(cfg.ransac.inlier_threshold > 0, key, "must be positive");
  } else if (key == "ransac.min_inlier_fraction") {
    cfg.ransac.min_inlier_fraction = parse_double(key, value);
    require(cfg.ransac.min_inlier_fraction >= 0 && cfg.ransac.min_inlier_fraction <= 1, key,
            "must lie in [0, 1]");
  } else if (key == "ransac.seed") {
    cfg.ransac.rng_seed = parse_u64(key, value);
  } else if (key == "ransac.count_subsample") {
    cfg.ransac.count_subsample = static_cast<int>(parse_int(key, value));
    require(cfg.ransac.count_subsample >= 1, key, "must be >= 1");
  } else if (key == "labeler.clip_value") {
    cfg.labeler.clip_value = parse_double(key, value);
    require(cfg.labeler.clip_value > 0, key, "must be positive");
  } else if (key == "labeler.bins") {
    cfg.labeler.bins = static_cast<int>(parse_int(key, value));
    require(cfg.labeler.bins >= 2, key, "must be >= 2");
  } else if (key == "labeler.eps_total_var") {
    cfg.labeler.eps_total_var = parse_double(key, value);
    require(cfg.labeler.eps_total_var >= 0, key, "must be >= 0");
  } else if (key == "labeler.eps_separation") {
    cfg.labeler.eps_separation = parse_double(key, value);
    require(cfg.labeler.eps_separation >= 0, key, "must be >= 0");
  } else if (key == "labeler.morph_radius") {
    cfg.labeler.morph_radius = static_cast<int>(parse_int(key, value));
    require(cfg.labeler.morph_radius >= 0, key, "must be >= 0");
  } else if (key == "labeler.reject_total_var_above") {
    cfg.labeler.reject_total_var_above = parse_bool(key, value);
  } else if (key == "events.bins") {
    cfg.events.bins = static_cast<int>(parse_int(key, value));
    require(cfg.events.bins >= 1, key, "must be >= 1");
  } else if (key == "events.slice_period") {
    cfg.events.slice_period = parse_double(key, value);
    require(cfg.events.slice_period > 0, key, "must be positive");
  } else if (key == "depth.z_max") {
    cfg.depth_z_max = parse_double(key, value);
    require(cfg.depth_z_max > 0, key, "must be positive");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  intrinsics.validate();
  ransac.validate();
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    apply(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace evseg
