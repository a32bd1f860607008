#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace roomgraph {

/// Pinhole camera intrinsics in pixels.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Square pixels, principal point at the image centre, focal length from
  /// the horizontal field of view.
  static Intrinsics from_fov(int width, int height, double hfov_deg = 60.0);
  void validate() const;
};

/// Metric depth in meters, row-major; 0 marks an invalid pixel.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  void validate() const;
  /// Multiplies every depth by `scale` (relative -> metric calibration hook).
  DepthMap scaled(double scale) const;
};

/// Binary object mask. Serialized externally as COCO run-length encoding.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool get(int u, int v) const { return bits_[index(u, v)] != 0; }
  void set(int u, int v, bool on = true) { bits_[index(u, v)] = on ? 1 : 0; }
  std::size_t count() const;

  /// Removes every set pixel with an unset (or out-of-image) 4-neighbour,
  /// `iterations` times.
  Mask eroded(int iterations) const;

  /// COCO compressed RLE string (column-major runs, starting with zeros).
  std::string to_rle() const;
  static Mask from_rle(std::string_view counts, int width, int height);
  /// Uncompressed COCO counts.
  std::vector<std::uint32_t> to_counts() const;
  static Mask from_counts(const std::vector<std::uint32_t>& counts, int width, int height);

  bool operator==(const Mask&) const = default;

 private:
  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width_ + u; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

using Point3 = Eigen::Vector3d;

/// Camera-frame points (+z forward) with the source pixel of each point.
struct PointCloud {
  int width = 0;
  int height = 0;
  std::vector<Point3> points;
  std::vector<std::uint32_t> pixels;  // v * width + u
};

PointCloud backproject(const DepthMap& depth, const Intrinsics& k);

struct CentroidOptions {
  std::size_t min_points = 10;
  int erosion = 1;
};

Point3 object_centroid(const PointCloud& cloud, const Mask& mask, const CentroidOptions& options = {});

double pair_distance(const Point3& a, const Point3& b);

struct LabeledCentroid {
  std::string label;
  Point3 centroid;
};

struct DistanceMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd meters;
};

DistanceMatrix distance_matrix(const std::vector<LabeledCentroid>& objects);

struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool operator==(const BBox&) const = default;
};

double bbox_area(const BBox& b);
double bbox_iou(const BBox& a, const BBox& b);
BBox clamp_bbox(const BBox& b, double width, double height);
/// Scales about the box centre by `s`, then clamps to [0,width]x[0,height].
BBox scale_bbox(const BBox& b, double s, double width, double height);
/// Crop-local box -> image coordinates.
BBox to_global(const BBox& b, double origin_x, double origin_y);

// Depth map I/O.
/// 16-bit binary PGM (P5, big-endian); meters = value * scale.
DepthMap read_depth_pgm(const std::filesystem::path& path, double scale);
void write_depth_pgm(const std::filesystem::path& path, const DepthMap& depth, double scale);
/// Raw little-endian float32 with a JSON sidecar {width, height, scale}.
DepthMap read_depth_raw(const std::filesystem::path& data, const std::filesystem::path& sidecar);
/// Dispatches on extension: .pgm (scale from argument) or raw + "<path>.json".
DepthMap read_depth(const std::filesystem::path& path, double pgm_scale);

}  // namespace roomgraph
