#ifndef SMVFUSE_DATASET_IO_HPP
#define SMVFUSE_DATASET_IO_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include <Eigen/Geometry>

#include "smvfuse/geometry.hpp"
#include "smvfuse/image.hpp"
#include "smvfuse/selection.hpp"

namespace smvfuse {

/// Raised for unreadable, malformed or inconsistent input files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// TUM depth PNG convention: meters = raw / 5000, raw 0 = invalid.
inline constexpr double kDepthPngScale = 5000.0;

namespace detail {

inline std::string lower_extension(const std::string &path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

struct FileCloser {
  void operator()(std::FILE *f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

/// 16-bit single-channel PNG as raw samples.
inline Image<std::uint16_t> read_png16(const std::string &path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  Image<std::uint16_t> img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": corrupt PNG");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": expected a 16-bit grayscale PNG");
  }
  if constexpr (std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);
  img = Image<std::uint16_t>(static_cast<int>(width), static_cast<int>(height));
  for (png_uint_32 v = 0; v < height; ++v) {
    png_read_row(png, reinterpret_cast<png_bytep>(img.row(static_cast<int>(v)).data()), nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png16(const std::string &path, const Image<std::uint16_t> &img) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed for " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if constexpr (std::endian::native == std::endian::little) png_set_swap(png);
  for (int v = 0; v < img.height(); ++v) {
    png_write_row(png, reinterpret_cast<png_const_bytep>(img.row(v).data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// 8-bit gray/RGB(A) PNG converted to gray in [0, 1] by libpng's simplified reader.
inline GrayImage read_png_gray(const std::string &path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError(path + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path + ": " + image.message);
  }
  GrayImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < buffer.size(); ++i) out.pixels()[i] = buffer[i] / 255.0;
  return out;
}

inline std::string read_token(std::istream &in, const std::string &path) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) return token;
    } else {
      token.push_back(c);
    }
  }
  if (token.empty()) throw IoError(path + ": truncated PFM header");
  return token;
}

}  // namespace detail

/**
 * Single-channel portable float map ("Pf"). Rows are stored bottom to top;
 * a negative scale marks little-endian data. Both endiannesses are read.
 */
inline Image<double> read_pfm(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::string magic = detail::read_token(in, path);
  if (magic != "Pf") throw IoError(path + ": unsupported float map magic '" + magic + "'");
  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(detail::read_token(in, path));
    height = std::stoi(detail::read_token(in, path));
    scale = std::stod(detail::read_token(in, path));
  } catch (const std::logic_error &) {
    throw IoError(path + ": malformed PFM header");
  }
  if (width <= 0 || height <= 0 || scale == 0.0) throw IoError(path + ": malformed PFM header");
  const bool little = scale < 0.0;
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!in) throw IoError(path + ": truncated PFM data");
  const bool swap = little != (std::endian::native == std::endian::little);
  Image<double> img(width, height);
  for (int row = 0; row < height; ++row) {
    for (int u = 0; u < width; ++u) {
      std::uint32_t bits = raw[static_cast<std::size_t>(row) * width + u];
      if (swap) bits = __builtin_bswap32(bits);
      img(u, height - 1 - row) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return img;
}

/// Writes a little-endian "Pf" map with header "Pf\n<w> <h>\n-1.0\n".
inline void write_pfm(const std::string &path, const Image<double> &img) {
  std::string bytes = "Pf\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n-1.0\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + img.size() * 4);
  char *dst = bytes.data() + header;
  for (int row = 0; row < img.height(); ++row) {
    for (int u = 0; u < img.width(); ++u) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(img(u, img.height() - 1 - row)));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      std::memcpy(dst, &bits, 4);
      dst += 4;
    }
  }
  detail::write_file(path, bytes);
}

/// Depth in meters from a .pfm or a 16-bit .png (raw / 5000). Invalid pixels are 0.
inline DepthImage read_depth_map(const std::string &path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".png") {
    const auto raw = detail::read_png16(path);
    DepthImage depth(raw.width(), raw.height());
    for (std::size_t i = 0; i < raw.size(); ++i) depth.pixels()[i] = raw.pixels()[i] / kDepthPngScale;
    return depth;
  }
  throw IoError(path + ": unknown depth format (expected .pfm or .png)");
}

/// As read_depth_map, additionally requiring the given size.
inline DepthImage read_depth_map(const std::string &path, int width, int height) {
  DepthImage depth = read_depth_map(path);
  if (!depth.same_shape(width, height)) {
    throw IoError(path + ": depth map is " + std::to_string(depth.width()) + "x" + std::to_string(depth.height()) +
                  ", expected " + std::to_string(width) + "x" + std::to_string(height));
  }
  return depth;
}

/**
 * Writes .pfm (float32) or 16-bit .png (rounded meters * 5000; non-positive,
 * non-finite or out-of-range values become 0).
 */
inline void write_depth_map(const DepthImage &depth, const std::string &path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".pfm") {
    write_pfm(path, depth);
  } else if (ext == ".png") {
    Image<std::uint16_t> raw(depth.width(), depth.height());
    for (std::size_t i = 0; i < depth.size(); ++i) {
      const double scaled = std::round(depth.pixels()[i] * kDepthPngScale);
      raw.pixels()[i] = (std::isfinite(scaled) && scaled > 0.0 && scaled <= 65535.0)
                            ? static_cast<std::uint16_t>(scaled)
                            : 0;
    }
    detail::write_png16(path, raw);
  } else {
    throw IoError(path + ": unknown depth format (expected .pfm or .png)");
  }
}

/// Grayscale image in [0, 1] from an 8-bit PNG, a 16-bit grayscale PNG, or a .pfm.
inline GrayImage read_gray_image(const std::string &path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".pfm") {
    GrayImage img = read_pfm(path);
    for (double &x : img.pixels()) x = std::clamp(x, 0.0, 1.0);
    return img;
  }
  if (ext == ".png") {
    {
      detail::FilePtr file(std::fopen(path.c_str(), "rb"));
      if (!file) throw IoError("cannot open " + path);
      unsigned char head[26];
      if (std::fread(head, 1, sizeof(head), file.get()) == sizeof(head) && head[24] == 16 && head[25] == 0) {
        const auto raw = detail::read_png16(path);
        GrayImage img(raw.width(), raw.height());
        for (std::size_t i = 0; i < raw.size(); ++i) img.pixels()[i] = raw.pixels()[i] / 65535.0;
        return img;
      }
    }
    return detail::read_png_gray(path);
  }
  throw IoError(path + ": unknown image format (expected .png or .pfm)");
}

/// Plain text "fx fy cx cy width height".
inline CameraIntrinsics read_intrinsics(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open intrinsics file " + path);
  CameraIntrinsics intr;
  if (!(in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height)) {
    throw IoError(path + ": expected 'fx fy cx cy width height'");
  }
  try {
    intr.validate();
  } catch (const std::invalid_argument &e) {
    throw IoError(path + ": " + e.what());
  }
  return intr;
}

inline std::string format_double(double x, const char *fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, x);
  return buf;
}

inline void write_intrinsics(const CameraIntrinsics &intr, const std::string &path) {
  detail::write_file(path, format_double(intr.fx) + " " + format_double(intr.fy) + " " + format_double(intr.cx) + " " +
                               format_double(intr.cy) + " " + std::to_string(intr.width) + " " +
                               std::to_string(intr.height) + "\n");
}

/// One line of a TUM-style trajectory.
struct TrajectoryEntry {
  double timestamp = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  /// Unit quaternion, camera-to-world rotation.
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  RigidPose pose() const { return RigidPose::from_quaternion(orientation, translation); }

  static TrajectoryEntry from_pose(double timestamp, const RigidPose &pose) {
    Eigen::Quaterniond q = pose.quaternion();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return {timestamp, pose.translation(), q};
  }
};

inline constexpr double kQuaternionTolerance = 1e-3;

namespace detail {

/// Parses "tx ty tz qx qy qz qw" from the stream, normalizing the quaternion.
inline void parse_pose_fields(std::istream &in, TrajectoryEntry &entry, const std::string &where) {
  double qx, qy, qz, qw;
  if (!(in >> entry.translation.x() >> entry.translation.y() >> entry.translation.z() >> qx >> qy >> qz >> qw)) {
    throw IoError(where + ": expected 'tx ty tz qx qy qz qw'");
  }
  Eigen::Quaterniond q(qw, qx, qy, qz);
  if (!q.coeffs().allFinite() || !entry.translation.allFinite()) throw IoError(where + ": non-finite pose");
  const double norm = q.norm();
  if (std::abs(norm - 1.0) >= kQuaternionTolerance) {
    throw IoError(where + ": quaternion norm " + format_double(norm, "%.6g") + " is not unit");
  }
  // Already-unit quaternions are kept bit-exact so text round trips are stable.
  if (std::abs(norm - 1.0) > 1e-12) q.coeffs() /= norm;
  entry.orientation = q;
}

}  // namespace detail

/// "timestamp tx ty tz qx qy qz qw" per line; '#' lines and blank lines are skipped.
inline std::vector<TrajectoryEntry> parse_pose_trajectory(std::istream &in, const std::string &name = "trajectory") {
  std::vector<TrajectoryEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    TrajectoryEntry e;
    const std::string where = name + " line " + std::to_string(line_no);
    if (!(ls >> e.timestamp)) throw IoError(where + ": expected a timestamp");
    detail::parse_pose_fields(ls, e, where);
    std::string extra;
    if (ls >> extra) throw IoError(where + ": trailing field '" + extra + "'");
    out.push_back(e);
  }
  return out;
}

inline std::vector<TrajectoryEntry> read_pose_trajectory(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory " + path);
  return parse_pose_trajectory(in, path);
}

inline std::string format_pose_fields(const TrajectoryEntry &e) {
  const auto &q = e.orientation;
  return format_double(e.translation.x()) + " " + format_double(e.translation.y()) + " " +
         format_double(e.translation.z()) + " " + format_double(q.x()) + " " + format_double(q.y()) + " " +
         format_double(q.z()) + " " + format_double(q.w());
}

inline std::string format_pose_trajectory(const std::vector<TrajectoryEntry> &entries) {
  std::string out = "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto &e : entries) out += format_double(e.timestamp, "%.6f") + " " + format_pose_fields(e) + "\n";
  return out;
}

inline void write_pose_trajectory(const std::vector<TrajectoryEntry> &entries, const std::string &path) {
  detail::write_file(path, format_pose_trajectory(entries));
}

/**
 * Sequence description, one frame per line:
 *
 *   <timestamp> <rgb_path> [<gt_depth_path>|-] [tx ty tz qx qy qz qw]
 *
 * Relative paths resolve against the manifest's directory. Poses are
 * camera-to-world.
 */
struct ManifestEntry {
  double timestamp = 0.0;
  std::string rgb_path;
  std::optional<std::string> depth_path;
  std::optional<TrajectoryEntry> pose;
};

struct SequenceManifest {
  std::vector<ManifestEntry> entries;

  void validate(bool check_paths = true) const {
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (!(entries[i].timestamp > entries[i - 1].timestamp)) {
        throw IoError("manifest: timestamps must be strictly increasing (entry " + std::to_string(i) + ")");
      }
    }
    if (!check_paths) return;
    for (const auto &e : entries) {
      if (!std::filesystem::exists(e.rgb_path)) throw IoError("manifest: missing image " + e.rgb_path);
      if (e.depth_path && !std::filesystem::exists(*e.depth_path)) {
        throw IoError("manifest: missing depth " + *e.depth_path);
      }
    }
  }
};

inline SequenceManifest parse_manifest(std::istream &in, const std::filesystem::path &base,
                                       const std::string &name = "manifest") {
  SequenceManifest m;
  std::string line;
  int line_no = 0;
  auto resolve = [&](const std::string &p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal().string();
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    const std::string where = name + " line " + std::to_string(line_no);
    ManifestEntry e;
    std::string rgb;
    if (!(ls >> e.timestamp >> rgb)) throw IoError(where + ": expected '<timestamp> <rgb_path>'");
    e.rgb_path = resolve(rgb);
    std::string depth;
    if (ls >> depth) {
      if (depth != "-") e.depth_path = resolve(depth);
      std::string rest;
      std::getline(ls, rest);
      if (rest.find_first_not_of(" \t\r") != std::string::npos) {
        std::istringstream ps(rest);
        TrajectoryEntry pose;
        pose.timestamp = e.timestamp;
        detail::parse_pose_fields(ps, pose, where);
        std::string extra;
        if (ps >> extra) throw IoError(where + ": trailing field '" + extra + "'");
        e.pose = pose;
      }
    }
    m.entries.push_back(std::move(e));
  }
  m.validate(false);
  return m;
}

inline SequenceManifest read_manifest(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  SequenceManifest m = parse_manifest(in, std::filesystem::path(path).parent_path(), path);
  m.validate(true);
  return m;
}

/// Paths are written as given; callers pass paths relative to the manifest directory.
inline std::string format_manifest(const SequenceManifest &m) {
  std::string out = "# timestamp rgb [depth|-] [tx ty tz qx qy qz qw]\n";
  for (const auto &e : m.entries) {
    out += format_double(e.timestamp, "%.6f") + " " + e.rgb_path;
    if (e.depth_path || e.pose) out += " " + (e.depth_path ? *e.depth_path : std::string("-"));
    if (e.pose) out += " " + format_pose_fields(*e.pose);
    out += "\n";
  }
  return out;
}

struct TimestampMatch {
  std::size_t first = 0;
  std::size_t second = 0;

  bool operator==(const TimestampMatch &) const = default;
};

/**
 * Greedy nearest-timestamp association: candidate pairs closer than max_dt
 * are accepted in order of increasing difference, each index at most once.
 * Result sorted by the first index.
 */
inline std::vector<TimestampMatch> associate(const std::vector<double> &first, const std::vector<double> &second,
                                             double max_dt = 0.02) {
  struct Candidate {
    double dt;
    std::size_t i, j;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t j = 0; j < second.size(); ++j) {
      const double dt = std::abs(first[i] - second[j]);
      if (dt < max_dt) candidates.push_back({dt, i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
    if (a.dt != b.dt) return a.dt < b.dt;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<bool> used_i(first.size(), false), used_j(second.size(), false);
  std::vector<TimestampMatch> out;
  for (const auto &c : candidates) {
    if (used_i[c.i] || used_j[c.j]) continue;
    used_i[c.i] = used_j[c.j] = true;
    out.push_back({c.i, c.j});
  }
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  return out;
}

/// CSV "u,v,m" with a header line.
inline std::string format_sparse_set(const SparseDepthSet &set) {
  std::string out = "u,v,m\n";
  for (const auto &p : set.points) {
    out += std::to_string(p.pixel.u) + "," + std::to_string(p.pixel.v) + "," + format_double(p.depth) + "\n";
  }
  return out;
}

inline void write_sparse_set(const SparseDepthSet &set, const std::string &path) {
  detail::write_file(path, format_sparse_set(set));
}

inline SparseDepthSet read_sparse_set(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open point list " + path);
  SparseDepthSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("u,", 0) == 0) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    SparseDepthPoint p;
    if (!(ls >> p.pixel.u >> p.pixel.v >> p.depth)) {
      throw IoError(path + " line " + std::to_string(line_no) + ": expected 'u,v,m'");
    }
    set.points.push_back(p);
  }
  try {
    set.validate();
  } catch (const std::invalid_argument &e) {
    throw IoError(path + ": " + e.what());
  }
  return set;
}

/// CSV "u,v,depth,best_cost,second_best_cost,cost_slope,sensitivity".
inline void write_candidates(const std::vector<CandidatePoint> &candidates, const std::string &path) {
  std::string out = "u,v,depth,best_cost,second_best_cost,cost_slope,sensitivity\n";
  for (const auto &c : candidates) {
    out += std::to_string(c.pixel.u) + "," + std::to_string(c.pixel.v) + "," + format_double(c.depth_multiview) + "," +
           format_double(c.best_cost) + "," + format_double(c.second_best_cost) + "," + format_double(c.cost_slope) +
           "," + format_double(c.sensitivity) + "\n";
  }
  detail::write_file(path, out);
}

inline std::vector<CandidatePoint> read_candidates(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open candidate list " + path);
  std::vector<CandidatePoint> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("u,", 0) == 0) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    CandidatePoint c;
    if (!(ls >> c.pixel.u >> c.pixel.v >> c.depth_multiview >> c.best_cost >> c.second_best_cost >> c.cost_slope >>
          c.sensitivity)) {
      throw IoError(path + " line " + std::to_string(line_no) + ": malformed candidate row");
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace smvfuse

#endif  // SMVFUSE_DATASET_IO_HPP
