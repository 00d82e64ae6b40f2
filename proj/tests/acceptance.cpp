// Acceptance suite. One PASS/FAIL line per criterion; exit status is non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "smvfuse/pipeline.hpp"
#include "smvfuse/smvfuse.hpp"

using namespace smvfuse;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char *format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

int failures = 0;

void report(int id, bool pass, const std::string &detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

const CameraIntrinsics kCamera{260.0, 260.0, 159.5, 119.5, 320, 240};
constexpr int kViews = 5;
constexpr int kKeyframe = 2;

// Per-scene results shared by criteria 1 and 2.
struct SceneResult {
  double single = 0, dense = 0, w1 = 0, w1w2 = 0, all = 0;
  std::size_t anchors = 0;
};

struct SuiteTiming {
  double pipeline = 0;
  double dense = 0;
  double ablation = 0;
};

std::vector<SceneResult> run_synthetic_suite(SuiteTiming &timing) {
  std::vector<SceneResult> out;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SceneResult r;
    auto t0 = Clock::now();
    const PlanarScene scene = random_planar_scene(seed, 2 + static_cast<int>(seed % 3));
    const auto trajectory = lateral_trajectory(kViews, 0.1, Eigen::Vector3d::UnitX(), kKeyframe);
    const auto offsets = random_segment_offsets(scene, 0.3, seed + 1);
    const auto seq = make_sequence(scene, kCamera, trajectory, offsets, 0.05, seed + 2);
    std::vector<Frame> others;
    for (int i = 0; i < kViews; ++i) {
      if (i != kKeyframe) others.push_back(seq.frames[i]);
    }
    const Frame &ref = seq.frames[kKeyframe];
    const InverseDepthGrid grid;
    const auto semi = estimate_inverse_depth(ref, others, kCamera, grid, high_gradient_mask(ref.image, 0.15));
    const auto top = select_top_fraction(to_candidates(semi, kCamera), 0.25);
    const DepthImage &s = seq.single_view[kKeyframe];
    const DepthImage &gt = seq.ground_truth[kKeyframe];
    const auto consensus = ransac_linear_consensus(top, s, RansacParams{200, 0.10, seed});
    const SparseDepthSet omega = consensus ? consensus->inliers : SparseDepthSet{};
    r.anchors = omega.size();
    const DepthImage fused = fuse(s, omega, FusionParams{}, {WeightSet::kAll, 0}).depth;
    timing.pipeline += seconds_since(t0);

    t0 = Clock::now();
    const DepthImage dense = dense_multiview_depth(ref, others, kCamera, grid);
    timing.dense += seconds_since(t0);

    t0 = Clock::now();
    const DepthImage f1 = fuse(s, omega, FusionParams{}, {WeightSet::kW1, 0}).depth;
    const DepthImage f12 = fuse(s, omega, FusionParams{}, {WeightSet::kW1W2, 0}).depth;
    timing.ablation += seconds_since(t0);

    const PixelMask valid = valid_depth_mask(gt);
    const auto mae = [&](const DepthImage &d) { return *mean_abs_error(d, gt, valid); };
    r.single = mae(s);
    r.dense = mae(dense);
    r.all = mae(fused);
    r.w1 = mae(f1);
    r.w1w2 = mae(f12);
    std::printf("  scene %2llu: |omega|=%4zu single=%.4f dense=%.4f fused=%.4f (W1=%.4f W1W2=%.4f)\n",
                static_cast<unsigned long long>(seed), r.anchors, r.single, r.dense, r.all, r.w1, r.w1w2);
    out.push_back(r);
  }
  return out;
}

void criteria_1_and_2() {
  SuiteTiming timing;
  const auto results = run_synthetic_suite(timing);
  int beats_single = 0, beats_dense = 0;
  double reduction = 0, w1 = 0, w1w2 = 0, all = 0;
  for (const auto &r : results) {
    beats_single += r.all < r.single;
    beats_dense += r.all < r.dense;
    reduction += 1.0 - r.all / r.single;
    w1 += r.w1;
    w1w2 += r.w1w2;
    all += r.all;
  }
  const double n = static_cast<double>(results.size());
  reduction /= n;
  const double runtime = timing.pipeline + timing.dense;
  report(1, beats_single >= 9 && reduction >= 0.30 && beats_dense == static_cast<int>(results.size()) && runtime < 60.0,
         fmt("fused<single on %d/10, mean reduction %.1f%%, fused<dense on %d/10, runtime %.1fs "
             "(pipeline %.1fs + dense baseline %.1fs)",
             beats_single, 100.0 * reduction, beats_dense, runtime, timing.pipeline, timing.dense));

  w1 /= n;
  w1w2 /= n;
  all /= n;
  const double gap_a = 1.0 - w1w2 / w1;
  const double gap_b = 1.0 - all / w1w2;
  report(2, gap_a >= 0.02 && gap_b >= 0.02,
         fmt("mean MAE W1=%.4f W1W2=%.4f all=%.4f, gaps %.1f%% and %.1f%% (need >= 2%%)", w1, w1w2, all,
             100.0 * gap_a, 100.0 * gap_b));
}

void criterion_3() {
  const PlanarScene scene = two_plane_scene(2.0, 4.0);
  const auto attempt = [&](double step, const PixelMask *override_mask) {
    const auto trajectory = lateral_trajectory(kViews, step, Eigen::Vector3d::UnitX(), kKeyframe);
    std::vector<RenderOutput> views;
    for (const auto &pose : trajectory.poses) views.push_back(render(scene, kCamera, pose));
    std::vector<Frame> others;
    for (int i = 0; i < kViews; ++i) {
      if (i != kKeyframe) others.push_back(views[i].frame);
    }
    const PixelMask mask = override_mask ? *override_mask : high_gradient_mask(views[kKeyframe].frame.image, 0.15);
    const auto result = estimate_inverse_depth(views[kKeyframe].frame, others, kCamera, InverseDepthGrid{}, mask);
    std::vector<double> errors;
    for (int v = 0; v < kCamera.height; ++v) {
      for (int u = 0; u < kCamera.width; ++u) {
        if (const auto &e = result.at(u, v)) {
          errors.push_back(std::abs(inverse_distance_to_z(kCamera, u, v, e->rho) - views[kKeyframe].depth(u, v)));
        }
      }
    }
    return std::make_pair(errors, count_selected(mask));
  };

  auto [errors, masked] = attempt(0.1, nullptr);
  double median = std::numeric_limits<double>::infinity();
  if (!errors.empty()) {
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    median = errors[errors.size() / 2];
  }
  const PixelMask every(kCamera.width, kCamera.height, 1);
  const auto [zero_errors, zero_attempted] = attempt(0.0, &every);
  const double excluded = 1.0 - static_cast<double>(zero_errors.size()) / static_cast<double>(zero_attempted);
  report(3, median < 0.05 && excluded >= 0.95,
         fmt("median error %.4f m over %zu of %zu masked pixels; zero baseline excludes %.1f%% of all pixels",
             median, errors.size(), masked, 100.0 * excluded));
}

void criterion_4() {
  // Anchors disagree with the single-view map by up to 1 m. Unrelated anchor
  // depths can cancel s_p to a fused value near zero, where a relative bound
  // says nothing about the arithmetic.
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  double smallest = std::numeric_limits<double>::infinity();
  int instances = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int w = std::uniform_int_distribution<int>(4, 64)(rng);
    const int h = std::uniform_int_distribution<int>(4, 48)(rng);
    std::uniform_real_distribution<double> depth(1.2, 6.0);
    std::uniform_real_distribution<double> disagreement(-1.0, 1.0);
    DepthImage s(w, h);
    for (double &x : s.pixels()) x = depth(rng);
    std::vector<int> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int n = std::min<int>(std::uniform_int_distribution<int>(2, 50)(rng), static_cast<int>(idx.size()));
    SparseDepthSet omega;
    for (int k = 0; k < n; ++k) {
      const Pixel p{idx[k] % w, idx[k] / w};
      omega.points.push_back({p, s(p.u, p.v) + disagreement(rng)});
    }
    for (auto [set, oset] : {std::pair{WeightSet::kW1, oracle::Weights::kW1},
                             std::pair{WeightSet::kW1W2, oracle::Weights::kW1W2},
                             std::pair{WeightSet::kAll, oracle::Weights::kAll}}) {
      const auto got = fuse(s, omega, FusionParams{}, {set, 0}).depth;
      const auto want = oracle::naive_fuse(s, omega, 15.0, 0.1, 1e-3, oset);
      for (std::size_t i = 0; i < s.size(); ++i) {
        worst = std::max(worst, std::abs(got.pixels()[i] - want.pixels()[i]) / std::abs(want.pixels()[i]));
        smallest = std::min(smallest, std::abs(want.pixels()[i]));
      }
    }
    ++instances;
  }
  report(4, worst <= 1e-12,
         fmt("%d instances x 3 weight sets, max relative deviation %.3g (smallest fused value %.3f)", instances, worst,
             smallest));
}

void criterion_5() {
  std::vector<std::string> failed;
  const auto check = [&](const char *name, bool ok) {
    if (!ok) failed.push_back(name);
  };
  check("w1 = e^-1", std::abs(weight_w1({0, 0}, {9, 12}, 15.0) - std::exp(-1.0)) < 1e-12);
  check("w2 = 100", std::abs(weight_w2(0.2, -0.1, 0.2, -0.1, 0.1) - 100.0) < 1e-9);

  DepthImage plane(5, 5);
  for (int v = 0; v < 5; ++v) {
    for (int u = 0; u < 5; ++u) plane(u, v) = 2.0 + 0.1 * u - 0.05 * v;
  }
  const auto g = depth_gradients(plane);
  const auto w34 = weight_w3_w4(plane, g, {1, 1}, {1, 1}, 1e-3);
  check("w3 = w4 = 1.001", std::abs(w34.w3 - 1.001) < 1e-12 && std::abs(w34.w4 - 1.001) < 1e-12);

  const auto n = normalize_weights(std::vector<double>{3.0, 1.0, 2.0});
  check("normalize [3,1,2]", std::abs(n.weights[0] - 2.0 / 3.0) < 1e-15 && n.weights[1] == 0.0 &&
                                 std::abs(n.weights[2] - 1.0 / 3.0) < 1e-15);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> raw(1e-6, 100.0);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> w(2 + trial % 60);
    for (double &x : w) x = raw(rng);
    const auto nw = normalize_weights(w);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(nw.weights.begin(), nw.weights.end(), 0.0) - 1.0));
  }
  check("sum W = 1", worst_sum <= 1e-9);

  DepthImage gt(16, 12);
  std::uniform_real_distribution<double> d(0.3, 9.0);
  for (double &x : gt.pixels()) x = d(rng);
  const PixelMask all(16, 12, 1);
  for (double c : {0.5, 2.0, 10.0}) {
    DepthImage scaled = gt;
    for (double &x : scaled.pixels()) x *= c;
    check("scale invariance", std::abs(*scale_invariant_error(scaled, gt, all)) <= 1e-12);
  }
  DepthImage two_gt(2, 1, 3.0), two_est(2, 1);
  two_est(0, 0) = 6.0;
  two_est(1, 0) = 1.5;
  const double ln2sq = *scale_invariant_error(two_est, two_gt, PixelMask(2, 1, 1));
  check("ln^2 2", std::abs(ln2sq - std::log(2.0) * std::log(2.0)) < 1e-12 && std::abs(ln2sq - 0.4805) < 1e-4);

  std::string detail = failed.empty() ? "all unit values within tolerance" : "failed:";
  for (const auto &f : failed) detail += " [" + f + "]";
  report(5, failed.empty(), detail + fmt(" (max |sum W - 1| = %.2g)", worst_sum));
}

void criterion_6() {
  std::size_t outliers_total = 0, outliers_kept = 0, inliers_total = 0, inliers_kept = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed * 101);
    std::uniform_real_distribution<double> depth(1.0, 5.0);
    std::normal_distribution<double> noise(0.0, 0.04);
    std::uniform_real_distribution<double> gross(0.5001, 2.0);
    std::bernoulli_distribution sign(0.5);
    const int w = 80, h = 60;
    DepthImage s(w, h);
    for (double &x : s.pixels()) x = depth(rng);
    const double a = 0.9 + 0.04 * static_cast<double>(seed), b = -0.25 + 0.1 * static_cast<double>(seed);

    std::vector<int> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int n = 200, n_out = n * 3 / 10;
    std::vector<CandidatePoint> points;
    std::vector<bool> is_outlier(s.size(), false);
    for (int k = 0; k < n; ++k) {
      const Pixel p{idx[k] % w, idx[k] / w};
      const double truth = a * s(p.u, p.v) + b;
      double m = truth + noise(rng);
      if (k < n_out) {
        const double e = gross(rng);
        m = sign(rng) || truth - e <= 0.05 ? truth + e : truth - e;
        is_outlier[static_cast<std::size_t>(idx[k])] = true;
      }
      points.push_back({p, m, 0.0, 0.0, 0.0, 0.0});
    }
    const auto result = ransac_linear_consensus(points, s, RansacParams{200, 0.10, seed});
    outliers_total += n_out;
    inliers_total += n - n_out;
    if (!result) continue;
    for (const auto &q : result->inliers.points) {
      if (is_outlier[static_cast<std::size_t>(q.pixel.v * w + q.pixel.u)]) {
        ++outliers_kept;
      } else {
        ++inliers_kept;
      }
    }
  }
  const double removed = 1.0 - static_cast<double>(outliers_kept) / static_cast<double>(outliers_total);
  const double retained = static_cast<double>(inliers_kept) / static_cast<double>(inliers_total);
  report(6, outliers_kept == 0 && retained >= 0.80,
         fmt("5 seeds: %.1f%% of %zu outliers removed, %.1f%% of %zu inliers retained", 100.0 * removed,
             outliers_total, 100.0 * retained, inliers_total));
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Compares every regular file under two trees; returns the first mismatch.
std::string compare_trees(const fs::path &a, const fs::path &b) {
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  }
  std::size_t count_b = 0;
  for (const auto &e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (files.size() != count_b) return fmt("file count %zu vs %zu", files.size(), count_b);
  for (const auto &rel : files) {
    if (rel.filename() == "config_echo.txt") continue;  // names the output directory
    if (slurp(a / rel) != slurp(b / rel)) return rel.string();
  }
  return "";
}

void criterion_7() {
  const fs::path root = fs::temp_directory_path() / "smvfuse_acceptance_determinism";
  fs::remove_all(root);
  const auto synth = [&](const std::string &name) {
    ConfigMap m;
    m.set("seed", "11");
    m.set("output_dir", (root / name).string());
    Pipeline(RunConfig::from(m)).synth();
  };
  const auto run = [&](const std::string &data, const std::string &name, const char *threads) {
    setenv(kThreadsEnv, threads, 1);
    ConfigMap m;
    m.set("seed", "11");
    m.set("manifest", (root / data / "manifest.txt").string());
    m.set("intrinsics", (root / data / "intrinsics.txt").string());
    m.set("single_view_dir", (root / data / "single_view").string());
    m.set("output_dir", (root / name).string());
    m.set("keyframe.stride", "2");
    Pipeline(RunConfig::from(m)).pipeline();
  };
  synth("data_a");
  synth("data_b");
  run("data_a", "run_a", "4");
  run("data_a", "run_b", "4");
  run("data_a", "threads_1", "1");
  run("data_a", "threads_8", "8");
  unsetenv(kThreadsEnv);

  const std::string synth_diff = compare_trees(root / "data_a", root / "data_b");
  const std::string rerun_diff = compare_trees(root / "run_a", root / "run_b");
  const std::string thread_diff = compare_trees(root / "threads_1", root / "threads_8");
  std::size_t files = 0;
  for (const auto &e : fs::directory_iterator(root / "run_a")) files += e.is_regular_file();
  const auto describe = [](const std::string &d) { return d.empty() ? std::string("identical") : "differs at " + d; };
  report(7, synth_diff.empty() && rerun_diff.empty() && thread_diff.empty(),
         fmt("%zu pipeline outputs; synth rerun %s; pipeline rerun %s; threads 1 vs 8 %s", files,
             describe(synth_diff).c_str(), describe(rerun_diff).c_str(), describe(thread_diff).c_str()));
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<void()>>> criteria{
      {"1-2", criteria_1_and_2}, {"3", criterion_3}, {"4", criterion_4},
      {"5", criterion_5},        {"6", criterion_6}, {"7", criterion_7},
  };
  for (const auto &[name, body] : criteria) {
    try {
      body();
    } catch (const std::exception &e) {
      std::printf("criterion %s: FAIL  exception: %s\n", name, e.what());
      ++failures;
    }
  }
  std::printf("criterion 8: SKIPPED  optional; needs the TUM fr1_desk sequence and a pretrained single-view network\n");
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
