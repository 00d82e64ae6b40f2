#ifndef SMVFUSE_PIPELINE_HPP
#define SMVFUSE_PIPELINE_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smvfuse/config.hpp"
#include "smvfuse/dataset_io.hpp"
#include "smvfuse/fusion.hpp"
#include "smvfuse/image.hpp"
#include "smvfuse/metrics.hpp"
#include "smvfuse/multiview.hpp"
#include "smvfuse/selection.hpp"
#include "smvfuse/synth.hpp"

namespace smvfuse {

/// A pipeline stage could not produce its output.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string &stage, const std::string &message)
      : std::runtime_error(stage + ": " + message), stage_(stage) {}
  const std::string &stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Fused depths are clamped to at least this many meters before writing.
inline constexpr double kMinFusedDepth = 1e-3;

/// Every `stride`-th frame index, starting at 0.
inline std::vector<int> keyframe_indices(int frame_count, int stride) {
  std::vector<int> out;
  for (int i = 0; i < frame_count; i += stride) out.push_back(i);
  return out;
}

/// The `count` frames nearest to `keyframe` by index (lower index first on ties), keyframe excluded.
inline std::vector<int> overlap_indices(int keyframe, int frame_count, int count) {
  std::vector<int> all;
  for (int i = 0; i < frame_count; ++i) {
    if (i != keyframe) all.push_back(i);
  }
  std::stable_sort(all.begin(), all.end(),
                   [&](int a, int b) { return std::abs(a - keyframe) < std::abs(b - keyframe); });
  if (static_cast<int>(all.size()) > count) all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

/**
 * Keeps anchors whose depth is within `tolerance` of valid ground truth.
 * Used for upper-bound experiments only.
 */
inline SparseDepthSet manual_selection_filter(const SparseDepthSet &omega, const DepthImage &gt, double tolerance) {
  SparseDepthSet out;
  for (const auto &p : omega.points) {
    if (!gt.contains(p.pixel.u, p.pixel.v)) continue;
    const double y = gt(p.pixel.u, p.pixel.v);
    if (y > 0.0 && std::abs(p.depth - y) < tolerance) out.points.push_back(p);
  }
  return out;
}

/// est - gt where both are valid, else 0.
inline Image<double> error_image(const DepthImage &est, const DepthImage &gt) {
  Image<double> err(gt.width(), gt.height(), 0.0);
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      if (gt(u, v) > 0.0 && est(u, v) > 0.0) err(u, v) = est(u, v) - gt(u, v);
    }
  }
  return err;
}

/// Posed frames of a manifest together with the camera.
struct LoadedSequence {
  CameraIntrinsics intrinsics;
  SequenceManifest manifest;
  std::vector<Frame> frames;
};

class Pipeline {
 public:
  using Log = std::function<void(const std::string &)>;

  explicit Pipeline(RunConfig config, Log log = {}) : cfg_(std::move(config)), log_(std::move(log)) {}

  const RunConfig &config() const { return cfg_; }

  // Subcommands. Each writes the config echo first.

  void synth() {
    prepare_output();
    const auto &s = cfg_.synth;
    const PlanarScene scene = s.scene_path.empty() ? random_planar_scene(cfg_.seed, s.segments) : read_scene(s.scene_path);
    const TrajectorySpec trajectory = lateral_trajectory(s.frames, s.step);
    const auto offsets = random_segment_offsets(scene, s.offset_range, cfg_.seed + 1);
    const SyntheticSequence seq = make_sequence(scene, s.intrinsics, trajectory, offsets, s.noise_amp, cfg_.seed + 2);

    const std::filesystem::path out(cfg_.output_dir);
    std::filesystem::create_directories(out / "rgb");
    std::filesystem::create_directories(out / "depth");
    std::filesystem::create_directories(out / "single_view");
    SequenceManifest manifest;
    std::vector<TrajectoryEntry> trajectory_entries;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu.pfm", i);
      write_pfm((out / "rgb" / name).string(), seq.frames[i].image);
      write_depth_map(seq.ground_truth[i], (out / "depth" / name).string());
      write_depth_map(seq.single_view[i], (out / "single_view" / name).string());
      const double timestamp = static_cast<double>(i) / 30.0;
      const auto pose = TrajectoryEntry::from_pose(timestamp, seq.frames[i].pose);
      manifest.entries.push_back({timestamp, std::string("rgb/") + name, std::string("depth/") + name, pose});
      trajectory_entries.push_back(pose);
    }
    detail::write_file((out / "manifest.txt").string(), format_manifest(manifest));
    write_intrinsics(s.intrinsics, (out / "intrinsics.txt").string());
    write_pose_trajectory(trajectory_entries, (out / "groundtruth.txt").string());
    detail::write_file((out / "scene.txt").string(), format_scene(scene));
    log("synth: wrote " + std::to_string(seq.frames.size()) + " frames to " + out.string());
  }

  void multiview() {
    prepare_output();
    const LoadedSequence seq = load_sequence();
    for (int kf : keyframes(seq)) run_multiview(seq, kf);
  }

  void select() {
    prepare_output();
    const LoadedSequence seq = load_sequence();
    for (int kf : keyframes(seq)) run_select(seq, kf);
  }

  void fuse_stage() {
    prepare_output();
    const LoadedSequence seq = load_sequence();
    for (int kf : keyframes(seq)) run_fuse(seq, kf, cfg_.weights, artifact(kf, "fused.pfm"));
  }

  void evaluate() {
    prepare_output();
    const LoadedSequence seq = load_sequence();
    run_evaluate(seq, true);
  }

  void ablate() {
    prepare_output();
    const LoadedSequence seq = load_sequence();
    std::string csv = std::string(DepthErrorReport::csv_header()) + "\n";
    std::size_t rows = 0;
    for (int kf : keyframes(seq)) {
      const auto gt = ground_truth(seq, kf);
      for (WeightSet set : {WeightSet::kW1, WeightSet::kW1W2, WeightSet::kAll}) {
        const std::string path = artifact(kf, std::string("fused_") + to_string(set) + ".pfm");
        const DepthImage fused = run_fuse(seq, kf, set, path);
        if (!gt) continue;
        if (auto r = report(fused, *gt, seq.frames[static_cast<std::size_t>(kf)].image)) {
          csv += r->to_csv_row(sequence_label(kf), std::string("fused_") + to_string(set)) + "\n";
          ++rows;
        }
      }
    }
    if (rows == 0) throw StageError("ablate", "no keyframe has ground truth to evaluate against");
    write_text("ablation.csv", csv);
  }

  void pipeline() {
    prepare_output();
    const LoadedSequence seq = load_sequence();
    for (int kf : keyframes(seq)) {
      run_multiview(seq, kf);
      run_select(seq, kf);
      run_fuse(seq, kf, cfg_.weights, artifact(kf, "fused.pfm"));
    }
    run_evaluate(seq, false);
  }

  // Building blocks.

  LoadedSequence load_sequence() const {
    if (cfg_.intrinsics.empty()) throw IoError("intrinsics: no path configured");
    if (!std::filesystem::exists(cfg_.intrinsics)) throw IoError("intrinsics file not found: " + cfg_.intrinsics);
    if (cfg_.manifest.empty()) throw IoError("manifest: no path configured");
    LoadedSequence seq;
    seq.intrinsics = read_intrinsics(cfg_.intrinsics);
    seq.manifest = read_manifest(cfg_.manifest);
    for (std::size_t i = 0; i < seq.manifest.entries.size(); ++i) {
      const auto &e = seq.manifest.entries[i];
      if (!e.pose) throw IoError(cfg_.manifest + ": entry " + std::to_string(i) + " has no pose");
      Frame f{read_gray_image(e.rgb_path), e.pose->pose(), static_cast<int>(i)};
      if (!f.image.same_shape(seq.intrinsics.width, seq.intrinsics.height)) {
        throw IoError(e.rgb_path + ": image size does not match intrinsics");
      }
      seq.frames.push_back(std::move(f));
    }
    if (seq.frames.size() < 2) throw IoError(cfg_.manifest + ": need at least two frames");
    return seq;
  }

  std::string artifact(int keyframe, const std::string &suffix) const {
    char name[32];
    std::snprintf(name, sizeof(name), "kf_%04d_", keyframe);
    return (std::filesystem::path(cfg_.output_dir) / (name + suffix)).string();
  }

  /// Single-view depth for frame i at keyframe resolution.
  DepthImage single_view(const LoadedSequence &seq, int i) const {
    const std::string path = single_view_path(seq.manifest.entries[static_cast<std::size_t>(i)].rgb_path);
    if (!std::filesystem::exists(path)) throw IoError("single-view depth not found: " + path);
    DepthImage s = read_depth_map(path);
    s = resize_bilinear(s, seq.intrinsics.width, seq.intrinsics.height);
    try {
      validate_dense_depth(s, "single-view depth");
    } catch (const std::invalid_argument &e) {
      throw IoError(path + ": " + e.what());
    }
    return s;
  }

  std::optional<DepthImage> ground_truth(const LoadedSequence &seq, int i) const {
    const auto &e = seq.manifest.entries[static_cast<std::size_t>(i)];
    if (!e.depth_path) return std::nullopt;
    return read_depth_map(*e.depth_path);
  }

 private:
  void log(const std::string &msg) const {
    if (log_) log_(msg);
  }

  void prepare_output() const {
    std::filesystem::create_directories(cfg_.output_dir);
    write_text("config_echo.txt", cfg_.echo);
  }

  void write_text(const std::string &name, const std::string &text) const {
    detail::write_file((std::filesystem::path(cfg_.output_dir) / name).string(), text);
  }

  std::vector<int> keyframes(const LoadedSequence &seq) const {
    return keyframe_indices(static_cast<int>(seq.frames.size()), cfg_.keyframe_stride);
  }

  std::string sequence_label(int kf) const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", kf);
    return cfg_.sequence + "/kf" + buf;
  }

  std::string single_view_path(const std::string &rgb_path) const {
    if (cfg_.single_view_dir.empty()) throw IoError("single_view_dir: no path configured");
    const std::filesystem::path dir(cfg_.single_view_dir);
    const std::filesystem::path index = dir / "index.csv";
    if (std::filesystem::exists(index)) {
      std::ifstream in(index);
      std::string line;
      const std::string rgb_name = std::filesystem::path(rgb_path).filename().string();
      while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const std::string image = line.substr(0, comma);
        if (image == rgb_path || std::filesystem::path(image).filename().string() == rgb_name) {
          const std::filesystem::path depth(line.substr(comma + 1));
          return (depth.is_absolute() ? depth : dir / depth).string();
        }
      }
    }
    const std::string stem = std::filesystem::path(rgb_path).stem().string();
    for (const char *ext : {".pfm", ".png"}) {
      const auto candidate = dir / (stem + ext);
      if (std::filesystem::exists(candidate)) return candidate.string();
    }
    return (dir / (stem + ".pfm")).string();
  }

  void run_multiview(const LoadedSequence &seq, int kf) const {
    std::vector<Frame> others;
    for (int i : overlap_indices(kf, static_cast<int>(seq.frames.size()), cfg_.keyframe_overlap)) {
      others.push_back(seq.frames[static_cast<std::size_t>(i)]);
    }
    const Frame &ref = seq.frames[static_cast<std::size_t>(kf)];
    const PixelMask mask = high_gradient_mask(ref.image, cfg_.mask_gradient);
    const SemiDenseDepthResult result =
        estimate_inverse_depth(ref, others, seq.intrinsics, cfg_.grid, mask, cfg_.multiview);
    const auto candidates = to_candidates(result, seq.intrinsics);
    if (candidates.empty()) throw StageError("multiview", "keyframe " + std::to_string(kf) + " has no estimated pixel");
    write_depth_map(result.z_depth(seq.intrinsics), artifact(kf, "multiview.pfm"));
    write_candidates(candidates, artifact(kf, "candidates.csv"));
    log("multiview: keyframe " + std::to_string(kf) + ": " + std::to_string(candidates.size()) + " of " +
        std::to_string(count_selected(mask)) + " masked pixels estimated");
  }

  void run_select(const LoadedSequence &seq, int kf) const {
    const std::string cand_path = artifact(kf, "candidates.csv");
    if (!std::filesystem::exists(cand_path)) throw IoError("candidate list not found: " + cand_path);
    const auto candidates = read_candidates(cand_path);
    const DepthImage s = single_view(seq, kf);
    const auto top = select_top_fraction(candidates, cfg_.selection_fraction);
    SparseDepthSet omega;
    if (cfg_.use_ransac) {
      const auto consensus = ransac_linear_consensus(top, s, cfg_.ransac);
      if (!consensus) {
        throw StageError("selection", "keyframe " + std::to_string(kf) + ": no linear consensus between " +
                                          std::to_string(top.size()) + " points and the single-view depth");
      }
      omega = consensus->inliers;
      write_text(std::filesystem::path(artifact(kf, "model.txt")).filename().string(),
                 "a=" + format_double(consensus->model.a) + "\nb=" + format_double(consensus->model.b) + "\n");
    } else {
      omega = to_sparse_set(top);
    }
    if (cfg_.manual_tolerance) {
      const auto gt = ground_truth(seq, kf);
      if (!gt) throw StageError("selection", "manual selection needs ground truth for keyframe " + std::to_string(kf));
      omega = manual_selection_filter(omega, resize_bilinear_masked(*gt, s.width(), s.height()), *cfg_.manual_tolerance);
    }
    write_sparse_set(omega, artifact(kf, "omega.csv"));
    log("select: keyframe " + std::to_string(kf) + ": " + std::to_string(candidates.size()) + " candidates -> " +
        std::to_string(top.size()) + " top -> " + std::to_string(omega.size()) + " anchors");
  }

  DepthImage run_fuse(const LoadedSequence &seq, int kf, WeightSet set, const std::string &out_path) const {
    const std::string omega_path = artifact(kf, "omega.csv");
    if (!std::filesystem::exists(omega_path)) throw IoError("point list not found: " + omega_path);
    const SparseDepthSet omega = read_sparse_set(omega_path);
    const DepthImage s = single_view(seq, kf);
    FusionResult fused = fuse(s, omega, cfg_.fusion, FusionOptions{set, 0});
    for (double &d : fused.depth.pixels()) d = std::max(d, kMinFusedDepth);
    write_depth_map(fused.depth, out_path);
    std::string note;
    if (fused.status == FusionStatus::kNoFusion) note = " (no anchors, output is the single-view depth)";
    if (fused.status == FusionStatus::kSingleAnchor) note = " (single anchor, global shift only)";
    log("fuse: keyframe " + std::to_string(kf) + " [" + to_string(set) + "] with " + std::to_string(omega.size()) +
        " anchors" + note);
    return fused.depth;
  }

  std::optional<DepthErrorReport> report(const DepthImage &est, const DepthImage &gt, const GrayImage &image) const {
    const DepthImage up = est.same_shape(gt) ? est : resize_bilinear_masked(est, gt.width(), gt.height());
    const GrayImage img = resize_bilinear(image, gt.width(), gt.height());
    return evaluate_depth(up, gt, valid_depth_mask(gt), &img, cfg_.eval_gradient_threshold);
  }

  void run_evaluate(const LoadedSequence &seq, bool require_gt) const {
    std::string csv = std::string(DepthErrorReport::csv_header()) + "\n";
    std::string text;
    std::size_t evaluated = 0;
    for (int kf : keyframes(seq)) {
      const auto gt = ground_truth(seq, kf);
      if (!gt) continue;
      const GrayImage &image = seq.frames[static_cast<std::size_t>(kf)].image;
      const std::string fused_path = artifact(kf, "fused.pfm");
      if (!std::filesystem::exists(fused_path)) throw IoError("fused depth not found: " + fused_path);
      const std::map<std::string, DepthImage> methods{
          {"single_view", single_view(seq, kf)},
          {"multiview", read_depth_map(artifact(kf, "multiview.pfm"))},
          {"fused", read_depth_map(fused_path)},
      };
      for (const auto &name : {"single_view", "multiview", "fused"}) {
        const DepthImage &est = methods.at(name);
        const auto r = report(est, *gt, image);
        if (!r) continue;
        csv += r->to_csv_row(sequence_label(kf), name) + "\n";
        text += "[" + sequence_label(kf) + " " + name + "]\n" + r->to_key_value();
        if (std::string(name) != "multiview") {
          const DepthImage up = est.same_shape(*gt) ? est : resize_bilinear(est, gt->width(), gt->height());
          write_pfm(artifact(kf, std::string("error_") + name + ".pfm"), error_image(up, *gt));
        }
      }
      ++evaluated;
    }
    if (evaluated == 0) {
      if (require_gt) throw StageError("evaluate", "no keyframe has ground truth");
      log("evaluate: skipped, no ground truth");
      return;
    }
    write_text("metrics.csv", csv);
    write_text("report.txt", text);
    log("evaluate: " + std::to_string(evaluated) + " keyframes");
  }

  RunConfig cfg_;
  Log log_;
};

}  // namespace smvfuse

#endif  // SMVFUSE_PIPELINE_HPP
