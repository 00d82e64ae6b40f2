#ifndef SMVFUSE_CONFIG_HPP
#define SMVFUSE_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "smvfuse/dataset_io.hpp"
#include "smvfuse/fusion.hpp"
#include "smvfuse/multiview.hpp"
#include "smvfuse/selection.hpp"

namespace smvfuse {

/// Invalid configuration: unknown key, unparsable value or violated invariant.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Flat `key=value` parameter table. Every known key has a default; unknown
 * keys are rejected so typos fail loudly.
 */
class ConfigMap {
 public:
  ConfigMap() {
    values_ = {
        {"manifest", ""},
        {"intrinsics", ""},
        {"single_view_dir", ""},
        {"output_dir", "out"},
        {"sequence", "sequence"},
        {"seed", "0"},
        {"fusion.sigma1", "15"},
        {"fusion.sigma2", "0.1"},
        {"fusion.sigma3", "0.001"},
        {"fusion.weights", "all"},
        {"multiview.rho_min", "0.1"},
        {"multiview.rho_max", "2.0"},
        {"multiview.samples", "192"},
        {"multiview.cost", "l1"},
        {"multiview.min_views", "1"},
        {"multiview.flat_threshold", "0.00392156862745098"},
        {"multiview.mask_gradient", "0.15"},
        {"selection.fraction", "0.25"},
        {"selection.ransac", "true"},
        {"selection.ransac_iters", "200"},
        {"selection.inlier_tol", "0.10"},
        {"selection.manual_tol", ""},
        {"eval.gradient_threshold", "0.35"},
        {"keyframe.stride", "10"},
        {"keyframe.overlap", "4"},
        {"synth.scene", ""},
        {"synth.segments", "3"},
        {"synth.frames", "5"},
        {"synth.step", "0.1"},
        {"synth.offset_range", "0.3"},
        {"synth.noise_amp", "0.05"},
        {"synth.fx", "260"},
        {"synth.fy", "260"},
        {"synth.cx", "159.5"},
        {"synth.cy", "119.5"},
        {"synth.width", "320"},
        {"synth.height", "240"},
    };
  }

  void set(const std::string &key, const std::string &value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    it->second = value;
  }

  /// Applies "key=value".
  void apply(const std::string &assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  /// Reads `key=value` lines; '#' starts a comment.
  void load(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      try {
        apply(line);
      } catch (const ConfigError &e) {
        throw ConfigError(path + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  const std::string &get(const std::string &key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string &key) const {
    try {
      std::size_t pos = 0;
      const double x = std::stod(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument(key);
      return x;
    } catch (const std::logic_error &) {
      throw ConfigError(key + ": expected a number, got '" + get(key) + "'");
    }
  }

  long long get_int(const std::string &key) const {
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument(key);
      return x;
    } catch (const std::logic_error &) {
      throw ConfigError(key + ": expected an integer, got '" + get(key) + "'");
    }
  }

  bool get_bool(const std::string &key) const {
    const std::string &v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
  }

  /// Sorted `key=value` lines.
  std::string echo() const {
    std::string out;
    for (const auto &[k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline WeightSet weight_set_from_string(const std::string &name) {
  if (name == "all") return WeightSet::kAll;
  if (name == "w1") return WeightSet::kW1;
  if (name == "w1w2") return WeightSet::kW1W2;
  throw ConfigError("fusion.weights: expected all, w1 or w1w2, got '" + name + "'");
}

struct SynthSettings {
  std::string scene_path;
  int segments = 3;
  int frames = 5;
  double step = 0.1;
  double offset_range = 0.3;
  double noise_amp = 0.05;
  CameraIntrinsics intrinsics;
};

/// Typed, validated view of a ConfigMap.
struct RunConfig {
  std::string manifest;
  std::string intrinsics;
  std::string single_view_dir;
  std::string output_dir;
  std::string sequence;
  std::uint64_t seed = 0;

  FusionParams fusion;
  WeightSet weights = WeightSet::kAll;

  InverseDepthGrid grid;
  MultiviewOptions multiview;
  double mask_gradient = 0.15;

  double selection_fraction = 0.25;
  bool use_ransac = true;
  RansacParams ransac;
  std::optional<double> manual_tolerance;

  double eval_gradient_threshold = 0.35;
  int keyframe_stride = 10;
  int keyframe_overlap = 4;

  SynthSettings synth;

  std::string echo;

  static RunConfig from(const ConfigMap &map) {
    RunConfig c;
    c.manifest = map.get("manifest");
    c.intrinsics = map.get("intrinsics");
    c.single_view_dir = map.get("single_view_dir");
    c.output_dir = map.get("output_dir");
    c.sequence = map.get("sequence");
    if (c.sequence.find_first_of(",\n") != std::string::npos) throw ConfigError("sequence: must not contain commas");
    const long long seed = map.get_int("seed");
    if (seed < 0) throw ConfigError("seed: must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);

    c.fusion = {map.get_double("fusion.sigma1"), map.get_double("fusion.sigma2"), map.get_double("fusion.sigma3")};
    c.weights = weight_set_from_string(map.get("fusion.weights"));

    c.grid = {map.get_double("multiview.rho_min"), map.get_double("multiview.rho_max"),
              static_cast<int>(map.get_int("multiview.samples"))};
    const std::string cost = map.get("multiview.cost");
    if (cost == "l1") {
      c.multiview.norm = CostNorm::kL1;
    } else if (cost == "l2") {
      c.multiview.norm = CostNorm::kL2;
    } else {
      throw ConfigError("multiview.cost: expected l1 or l2");
    }
    c.multiview.min_views = static_cast<int>(map.get_int("multiview.min_views"));
    c.multiview.flat_threshold = map.get_double("multiview.flat_threshold");
    c.mask_gradient = map.get_double("multiview.mask_gradient");

    c.selection_fraction = map.get_double("selection.fraction");
    c.use_ransac = map.get_bool("selection.ransac");
    c.ransac.iterations = static_cast<int>(map.get_int("selection.ransac_iters"));
    c.ransac.inlier_tolerance = map.get_double("selection.inlier_tol");
    c.ransac.seed = c.seed;
    if (!map.get("selection.manual_tol").empty()) c.manual_tolerance = map.get_double("selection.manual_tol");

    c.eval_gradient_threshold = map.get_double("eval.gradient_threshold");
    c.keyframe_stride = static_cast<int>(map.get_int("keyframe.stride"));
    c.keyframe_overlap = static_cast<int>(map.get_int("keyframe.overlap"));

    c.synth.scene_path = map.get("synth.scene");
    c.synth.segments = static_cast<int>(map.get_int("synth.segments"));
    c.synth.frames = static_cast<int>(map.get_int("synth.frames"));
    c.synth.step = map.get_double("synth.step");
    c.synth.offset_range = map.get_double("synth.offset_range");
    c.synth.noise_amp = map.get_double("synth.noise_amp");
    c.synth.intrinsics = {map.get_double("synth.fx"),
                          map.get_double("synth.fy"),
                          map.get_double("synth.cx"),
                          map.get_double("synth.cy"),
                          static_cast<int>(map.get_int("synth.width")),
                          static_cast<int>(map.get_int("synth.height"))};
    c.echo = map.echo();
    c.validate();
    return c;
  }

  void validate() const {
    try {
      fusion.validate();
      grid.validate();
    } catch (const std::invalid_argument &e) {
      throw ConfigError(e.what());
    }
    if (multiview.min_views < 1) throw ConfigError("multiview.min_views: must be >= 1");
    if (!(multiview.flat_threshold >= 0.0)) throw ConfigError("multiview.flat_threshold: must be >= 0");
    if (!(mask_gradient >= 0.0 && mask_gradient < 1.0)) throw ConfigError("multiview.mask_gradient: must be in [0,1)");
    if (!(selection_fraction > 0.0 && selection_fraction <= 1.0)) throw ConfigError("selection.fraction: must be in (0,1]");
    if (ransac.iterations < 1) throw ConfigError("selection.ransac_iters: must be >= 1");
    if (!(ransac.inlier_tolerance > 0.0)) throw ConfigError("selection.inlier_tol: must be positive");
    if (manual_tolerance && !(*manual_tolerance > 0.0)) throw ConfigError("selection.manual_tol: must be positive");
    if (!(eval_gradient_threshold > 0.0 && eval_gradient_threshold <= 1.0)) {
      throw ConfigError("eval.gradient_threshold: must be in (0,1]");
    }
    if (keyframe_stride < 1) throw ConfigError("keyframe.stride: must be >= 1");
    if (keyframe_overlap < 1) throw ConfigError("keyframe.overlap: must be >= 1");
    if (synth.segments < 2 || synth.segments > 4) throw ConfigError("synth.segments: must be 2..4");
    if (synth.frames < 2) throw ConfigError("synth.frames: must be >= 2");
    if (!(synth.offset_range >= 0.0) || !(synth.noise_amp >= 0.0)) {
      throw ConfigError("synth.offset_range and synth.noise_amp must be >= 0");
    }
    try {
      synth.intrinsics.validate();
    } catch (const std::invalid_argument &e) {
      throw ConfigError(std::string("synth intrinsics: ") + e.what());
    }
  }
};

}  // namespace smvfuse

#endif  // SMVFUSE_CONFIG_HPP
