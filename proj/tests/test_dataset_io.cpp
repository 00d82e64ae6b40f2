#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "smvfuse/dataset_io.hpp"

using namespace smvfuse;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("smvfuse_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Pfm, RoundTripWithinFloatPrecision) {
  const auto dir = scratch_dir("pfm");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-5.0, 50.0);
  Image<double> img(13, 7);
  for (double &x : img.pixels()) x = d(rng);
  write_pfm((dir / "a.pfm").string(), img);
  const auto back = read_pfm((dir / "a.pfm").string());
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(back.pixels()[i], static_cast<double>(static_cast<float>(img.pixels()[i])));
  }
}

TEST(Pfm, HeaderAndRowOrder) {
  const auto dir = scratch_dir("pfm_layout");
  Image<double> img(2, 2);
  img(0, 0) = 1.0;  // top-left
  img(1, 0) = 2.0;
  img(0, 1) = 3.0;  // bottom-left
  img(1, 1) = 4.0;
  write_pfm((dir / "b.pfm").string(), img);
  std::ifstream in(dir / "b.pfm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.substr(0, 12), "Pf\n2 2\n-1.0\n");
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + 12, 4);
  EXPECT_EQ(first, 3.0f);  // bottom row first
}

TEST(Pfm, ReadsBigEndian) {
  const auto dir = scratch_dir("pfm_be");
  std::string bytes = "Pf\n1 1\n1.0\n";
  const float v = 2.5f;
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  bits = __builtin_bswap32(bits);
  bytes.append(reinterpret_cast<const char *>(&bits), 4);
  std::ofstream(dir / "be.pfm", std::ios::binary) << bytes;
  EXPECT_EQ(read_pfm((dir / "be.pfm").string())(0, 0), 2.5);
}

TEST(Pfm, RejectsTruncatedAndWrongMagic) {
  const auto dir = scratch_dir("pfm_bad");
  std::ofstream(dir / "t.pfm", std::ios::binary) << "Pf\n4 4\n-1.0\nabc";
  EXPECT_THROW(read_pfm((dir / "t.pfm").string()), IoError);
  std::ofstream(dir / "m.pfm", std::ios::binary) << "PF\n1 1\n-1.0\n0000";
  EXPECT_THROW(read_pfm((dir / "m.pfm").string()), IoError);
  EXPECT_THROW(read_pfm((dir / "missing.pfm").string()), IoError);
}

TEST(DepthPng, ScaleConvention) {
  const auto dir = scratch_dir("png");
  DepthImage d(3, 2, 0.0);
  d(0, 0) = 2.0;
  d(1, 0) = 0.0;
  d(2, 0) = 1.2345;
  d(0, 1) = 20.0;  // out of 16-bit range
  write_depth_map(d, (dir / "d.png").string());
  const auto back = read_depth_map((dir / "d.png").string());
  EXPECT_EQ(back(0, 0), 10000 / 5000.0);
  EXPECT_EQ(back(1, 0), 0.0);
  EXPECT_NEAR(back(2, 0), 1.2345, 1.0 / 5000.0);
  EXPECT_EQ(back(0, 1), 0.0);
  EXPECT_THROW(read_depth_map((dir / "d.png").string(), 4, 2), IoError);
  EXPECT_THROW(read_depth_map((dir / "d.tiff").string()), IoError);
}

TEST(Intrinsics, RoundTripAndErrors) {
  const auto dir = scratch_dir("intr");
  const CameraIntrinsics intr{525.0, 525.5, 319.5, 239.5, 640, 480};
  write_intrinsics(intr, (dir / "k.txt").string());
  EXPECT_EQ(read_intrinsics((dir / "k.txt").string()), intr);
  std::ofstream(dir / "bad.txt") << "525 525 319.5\n";
  EXPECT_THROW(read_intrinsics((dir / "bad.txt").string()), IoError);
  try {
    read_intrinsics((dir / "none.txt").string());
    FAIL();
  } catch (const IoError &e) {
    EXPECT_NE(std::string(e.what()).find("none.txt"), std::string::npos);
  }
}

TEST(Trajectory, IdentityLineAndComments) {
  std::istringstream in("# ground truth\n0.0 0 0 0 0 0 0 1\n\n1.5 1 2 3 0 0 0.7071067811865476 0.7071067811865476\n");
  const auto t = parse_pose_trajectory(in);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].timestamp, 0.0);
  EXPECT_TRUE(t[0].pose().rotation().isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  EXPECT_EQ(t[0].pose().translation(), Eigen::Vector3d::Zero());
  EXPECT_NEAR((t[1].pose() * Eigen::Vector3d::UnitX() - Eigen::Vector3d(1, 3, 3)).norm(), 0.0, 1e-12);
}

TEST(Trajectory, RoundTripIsTextStable) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::vector<TrajectoryEntry> entries;
  for (int i = 0; i < 10; ++i) {
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    entries.push_back(TrajectoryEntry::from_pose(0.1 * i, RigidPose::from_quaternion(q, {n(rng), n(rng), n(rng)})));
  }
  const std::string text = format_pose_trajectory(entries);
  std::istringstream in(text);
  const auto back = parse_pose_trajectory(in);
  EXPECT_EQ(format_pose_trajectory(back), text);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EXPECT_LT((back[i].pose().rotation() - entries[i].pose().rotation()).norm(), 1e-9);
  }
}

TEST(Trajectory, RejectsBadQuaternionWithLineNumber) {
  std::istringstream in("0 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 2\n");
  try {
    parse_pose_trajectory(in);
    FAIL();
  } catch (const IoError &e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Associate, Examples) {
  const std::vector<double> a{0.0, 0.1, 0.2, 0.3};
  const auto same = associate(a, a, 0.02);
  ASSERT_EQ(same.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(same[i].first, i);
    EXPECT_EQ(same[i].second, i);
  }
  std::vector<double> b;
  for (double t : a) b.push_back(t + 0.01);
  EXPECT_EQ(associate(a, b, 0.02).size(), 4u);
  std::vector<double> c;
  for (double t : a) c.push_back(t + 0.05);
  EXPECT_TRUE(associate(a, c, 0.02).empty());
}

TEST(Manifest, ParseResolvesRelativePaths) {
  std::istringstream in("# comment\n0.0 rgb/0.png depth/0.png 0 0 0 0 0 0 1\n0.1 rgb/1.png -\n0.2 rgb/2.png\n");
  const auto m = parse_manifest(in, "/data/seq");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].rgb_path, "/data/seq/rgb/0.png");
  EXPECT_EQ(*m.entries[0].depth_path, "/data/seq/depth/0.png");
  EXPECT_TRUE(m.entries[0].pose);
  EXPECT_FALSE(m.entries[1].depth_path);
  EXPECT_FALSE(m.entries[2].pose);
  EXPECT_NO_THROW(m.validate(false));
}

TEST(Manifest, RejectsNonIncreasingTimestamps) {
  std::istringstream in("0.2 a.png\n0.1 b.png\n");
  EXPECT_THROW(parse_manifest(in, "/x").validate(false), IoError);
}

TEST(SparseSet, CsvRoundTrip) {
  const auto dir = scratch_dir("omega");
  SparseDepthSet omega{{{{1, 2}, 1.25}, {{7, 3}, 0.1 + 0.2}}};
  write_sparse_set(omega, (dir / "o.csv").string());
  EXPECT_EQ(read_sparse_set((dir / "o.csv").string()), omega);
  std::ifstream in(dir / "o.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "u,v,m");
}

TEST(Candidates, CsvRoundTrip) {
  const auto dir = scratch_dir("cand");
  const std::vector<CandidatePoint> c{{{3, 4}, 2.5, 0.01, 0.2, 0.03, 17.5}, {{0, 9}, 1.0 / 3.0, 0, 0, 0, 0}};
  write_candidates(c, (dir / "c.csv").string());
  const auto back = read_candidates((dir / "c.csv").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pixel, c[0].pixel);
  EXPECT_EQ(back[1].depth_multiview, c[1].depth_multiview);
  EXPECT_EQ(back[0].sensitivity, c[0].sensitivity);
}
