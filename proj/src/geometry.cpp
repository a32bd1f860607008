#include "roomgraph/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roomgraph/error.hpp"

namespace roomgraph {

Intrinsics Intrinsics::from_fov(int width, int height, double hfov_deg) {
  if (width <= 0 || height <= 0 || !(hfov_deg > 0.0 && hfov_deg < 180.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid image size or field of view");
  }
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = (width / 2.0) / std::tan(hfov_deg * std::numbers::pi / 360.0);
  k.fy = k.fx;
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  return k;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal lengths must be > 0");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

void DepthMap::validate() const {
  if (width <= 0 || height <= 0 || values.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kDimensionMismatch, "depth buffer does not match width x height");
  }
  for (float z : values) {
    if (!std::isfinite(z) || z < 0.0f) throw Error(ErrorCode::kInvalidArgument, "depth must be finite and >= 0");
  }
}

DepthMap DepthMap::scaled(double scale) const {
  DepthMap out = *this;
  for (auto& z : out.values) z = static_cast<float>(z * scale);
  return out;
}

// ---------------------------------------------------------------------------

Mask::Mask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::kInvalidArgument, "negative mask size");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::eroded(int iterations) const {
  Mask cur = *this;
  for (int it = 0; it < iterations; ++it) {
    Mask next(width_, height_);
    for (int v = 0; v < height_; ++v) {
      for (int u = 0; u < width_; ++u) {
        if (!cur.get(u, v)) continue;
        const bool interior = u > 0 && v > 0 && u + 1 < width_ && v + 1 < height_ && cur.get(u - 1, v) &&
                              cur.get(u + 1, v) && cur.get(u, v - 1) && cur.get(u, v + 1);
        if (interior) next.set(u, v);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<std::uint32_t> Mask::to_counts() const {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int u = 0; u < width_; ++u) {
    for (int v = 0; v < height_; ++v) {
      const std::uint8_t bit = bits_[index(u, v)];
      if (bit != current) {
        counts.push_back(run);
        run = 0;
        current = bit;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

Mask Mask::from_counts(const std::vector<std::uint32_t>& counts, int width, int height) {
  Mask m(width, height);
  std::size_t pos = 0;
  const std::size_t total = static_cast<std::size_t>(width) * height;
  bool on = false;
  for (std::uint32_t run : counts) {
    if (pos + run > total) throw Error(ErrorCode::kDimensionMismatch, "RLE runs exceed mask size");
    for (std::uint32_t i = 0; i < run; ++i, ++pos) {
      if (on) {
        // Column-major: pos = u * height + v.
        m.set(static_cast<int>(pos / height), static_cast<int>(pos % height));
      }
    }
    on = !on;
  }
  if (pos != total) throw Error(ErrorCode::kDimensionMismatch, "RLE runs do not cover the mask");
  return m;
}

std::string Mask::to_rle() const {
  const auto counts = to_counts();
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long x = static_cast<long>(counts[i]);
    if (i > 2) x -= static_cast<long>(counts[i - 2]);
    bool more = true;
    while (more) {
      long c = x & 0x1f;
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

Mask Mask::from_rle(std::string_view text, int width, int height) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < text.size()) {
    long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= text.size()) throw Error(ErrorCode::kUnparseable, "truncated RLE string");
      const long c = static_cast<long>(text[p]) - 48;
      if (c < 0 || c > 63) throw Error(ErrorCode::kUnparseable, "invalid RLE character");
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1L << (5 * k);
    }
    if (counts.size() > 2) x += static_cast<long>(counts[counts.size() - 2]);
    if (x < 0) throw Error(ErrorCode::kUnparseable, "negative RLE run");
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return from_counts(counts, width, height);
}

// ---------------------------------------------------------------------------

PointCloud backproject(const DepthMap& depth, const Intrinsics& k) {
  depth.validate();
  k.validate();
  if (depth.width != k.width || depth.height != k.height) {
    throw Error(ErrorCode::kDimensionMismatch, "depth map and intrinsics disagree on image size");
  }
  PointCloud cloud;
  cloud.width = depth.width;
  cloud.height = depth.height;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double z = depth.at(u, v);
      if (z <= 0.0) continue;
      cloud.points.emplace_back((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
      cloud.pixels.push_back(static_cast<std::uint32_t>(v * depth.width + u));
    }
  }
  return cloud;
}

Point3 object_centroid(const PointCloud& cloud, const Mask& mask, const CentroidOptions& options) {
  if (mask.width() != cloud.width || mask.height() != cloud.height) {
    throw Error(ErrorCode::kDimensionMismatch, "mask and point cloud disagree on image size");
  }
  const Mask m = options.erosion > 0 ? mask.eroded(options.erosion) : mask;
  Point3 sum = Point3::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const int u = static_cast<int>(cloud.pixels[i] % static_cast<std::uint32_t>(cloud.width));
    const int v = static_cast<int>(cloud.pixels[i] / static_cast<std::uint32_t>(cloud.width));
    if (!m.get(u, v)) continue;
    sum += cloud.points[i];
    ++n;
  }
  if (n == 0 || n < options.min_points) {
    throw Error(ErrorCode::kTooFewPoints, std::to_string(n));
  }
  return sum / static_cast<double>(n);
}

double pair_distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

DistanceMatrix distance_matrix(const std::vector<LabeledCentroid>& objects) {
  if (objects.size() < 2) throw Error(ErrorCode::kTooFewObjects, std::to_string(objects.size()));
  const auto n = static_cast<Eigen::Index>(objects.size());
  DistanceMatrix out;
  out.meters = Eigen::MatrixXd::Zero(n, n);
  for (const auto& o : objects) out.labels.push_back(o.label);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = pair_distance(objects[static_cast<std::size_t>(i)].centroid,
                                     objects[static_cast<std::size_t>(j)].centroid);
      out.meters(i, j) = d;
      out.meters(j, i) = d;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double bbox_area(const BBox& b) { return std::max(0.0, b.width()) * std::max(0.0, b.height()); }

double bbox_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = bbox_area(a) + bbox_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BBox clamp_bbox(const BBox& b, double width, double height) {
  return {std::clamp(b.x0, 0.0, width), std::clamp(b.y0, 0.0, height), std::clamp(b.x1, 0.0, width),
          std::clamp(b.y1, 0.0, height)};
}

BBox scale_bbox(const BBox& b, double s, double width, double height) {
  if (s < 1.0) throw Error(ErrorCode::kInvalidArgument, "scale factor must be >= 1");
  const double cx = 0.5 * (b.x0 + b.x1);
  const double cy = 0.5 * (b.y0 + b.y1);
  const double hw = 0.5 * b.width() * s;
  const double hh = 0.5 * b.height() * s;
  return clamp_bbox({cx - hw, cy - hh, cx + hw, cy + hh}, width, height);
}

BBox to_global(const BBox& b, double origin_x, double origin_y) {
  return {b.x0 + origin_x, b.y0 + origin_y, b.x1 + origin_x, b.y1 + origin_y};
}

// ---------------------------------------------------------------------------

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::string& data, std::size_t& pos) {
  for (;;) {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
  return data.substr(start, pos - start);
}

}  // namespace

DepthMap read_depth_pgm(const std::filesystem::path& path, double scale) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  if (pgm_token(data, pos) != "P5") throw Error(ErrorCode::kUnparseable, path.string() + ": not a binary PGM");
  DepthMap d;
  int maxval = 0;
  try {
    d.width = std::stoi(pgm_token(data, pos));
    d.height = std::stoi(pgm_token(data, pos));
    maxval = std::stoi(pgm_token(data, pos));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kUnparseable, path.string() + ": bad PGM header");
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(d.width) * d.height;
  if (d.width <= 0 || d.height <= 0 || data.size() < pos + n * bytes_per) {
    throw Error(ErrorCode::kDimensionMismatch, path.string() + ": truncated PGM payload");
  }
  d.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bytes_per);
    const unsigned raw = bytes_per == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
    d.values[i] = static_cast<float>(raw * scale);
  }
  return d;
}

void write_depth_pgm(const std::filesystem::path& path, const DepthMap& depth, double scale) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "P5\n" << depth.width << ' ' << depth.height << "\n65535\n";
  for (float z : depth.values) {
    const long raw = std::lround(z / scale);
    const auto v = static_cast<unsigned>(std::clamp(raw, 0L, 65535L));
    out.put(static_cast<char>((v >> 8) & 0xff));
    out.put(static_cast<char>(v & 0xff));
  }
}

DepthMap read_depth_raw(const std::filesystem::path& data_path, const std::filesystem::path& sidecar) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedJson, sidecar.string() + ": " + e.what());
  }
  DepthMap d;
  d.width = meta.value("width", 0);
  d.height = meta.value("height", 0);
  const double scale = meta.value("scale", 1.0);
  const std::string data = read_file(data_path);
  const std::size_t n = static_cast<std::size_t>(std::max(d.width, 0)) * std::max(d.height, 0);
  if (n == 0 || data.size() != n * sizeof(float)) {
    throw Error(ErrorCode::kDimensionMismatch, data_path.string() + ": size does not match sidecar");
  }
  d.values.resize(n);
  std::memcpy(d.values.data(), data.data(), data.size());  // little-endian host assumed
  if (scale != 1.0) d = d.scaled(scale);
  return d;
}

DepthMap read_depth(const std::filesystem::path& path, double pgm_scale) {
  if (path.extension() == ".pgm") return read_depth_pgm(path, pgm_scale);
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  if (!std::filesystem::exists(sidecar)) sidecar = std::filesystem::path(path).replace_extension(".json");
  return read_depth_raw(path, sidecar);
}

}  // namespace roomgraph
