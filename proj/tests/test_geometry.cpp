#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "roomgraph/error.hpp"
#include "roomgraph/geometry.hpp"

using namespace roomgraph;

namespace {

DepthMap plane(int w, int h, float z) { return DepthMap{w, h, std::vector<float>(static_cast<std::size_t>(w) * h, z)}; }

Intrinsics test_camera() { return Intrinsics{50.0, 50.0, 50.0, 50.0, 100, 100}; }

Mask pixel_mask(int u, int v) {
  Mask m(100, 100);
  m.set(u, v);
  return m;
}

const CentroidOptions kExact{1, 0};

}  // namespace

TEST_CASE("backproject: analytic pinhole values") {
  const auto cloud = backproject(plane(100, 100, 2.0f), test_camera());
  CHECK(cloud.points.size() == 10000);
  const auto& p = cloud.points[50 * 100 + 25];
  CHECK(p.x() == doctest::Approx(-1.0));
  CHECK(p.y() == doctest::Approx(0.0));
  CHECK(p.z() == doctest::Approx(2.0));
  const auto& c = cloud.points[50 * 100 + 50];
  CHECK(c.x() == 0.0);
  CHECK(c.y() == 0.0);
  for (const auto& q : cloud.points) CHECK(q.z() == 2.0);
}

TEST_CASE("backproject: invalid pixels and dimension errors") {
  CHECK(backproject(plane(100, 100, 0.0f), test_camera()).points.empty());
  CHECK_THROWS_AS(backproject(plane(80, 100, 1.0f), test_camera()), Error);
}

TEST_CASE("object_centroid") {
  const auto cloud = backproject(plane(100, 100, 2.0f), test_camera());
  const auto a = object_centroid(cloud, pixel_mask(25, 50), kExact);
  CHECK(a.x() == doctest::Approx(-1.0));
  CHECK(a.z() == doctest::Approx(2.0));

  Mask sym(100, 100);
  for (int v = 40; v <= 60; ++v)
    for (int u = 40; u <= 60; ++u) sym.set(u, v);
  const auto c = object_centroid(cloud, sym);  // default options: erosion 1, min 10
  CHECK(std::abs(c.x()) < 1e-12);
  CHECK(std::abs(c.y()) < 1e-12);
  CHECK(c.z() == doctest::Approx(2.0));

  const auto holes = backproject(plane(100, 100, 0.0f), test_camera());
  try {
    object_centroid(holes, sym);
    FAIL("expected TooFewPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooFewPoints);
  }
  CHECK_THROWS_AS(object_centroid(cloud, pixel_mask(25, 50)), Error);  // eroded away
}

TEST_CASE("property: centroid is translation equivariant") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  PointCloud cloud;
  cloud.width = 10;
  cloud.height = 10;
  Mask all(10, 10);
  for (std::uint32_t i = 0; i < 100; ++i) {
    cloud.points.emplace_back(d(rng), d(rng), 1.0 + std::abs(d(rng)));
    cloud.pixels.push_back(i);
    all.set(static_cast<int>(i % 10), static_cast<int>(i / 10));
  }
  const Point3 shift(0.5, -1.25, 2.0);
  PointCloud moved = cloud;
  for (auto& p : moved.points) p += shift;
  const auto a = object_centroid(cloud, all, kExact);
  const auto b = object_centroid(moved, all, kExact);
  CHECK((b - a - shift).norm() < 1e-12);
}

TEST_CASE("pair_distance and distance_matrix") {
  CHECK(pair_distance({-1, 0, 2}, {1, 0, 2}) == doctest::Approx(2.0));
  CHECK(pair_distance({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(pair_distance({0, 0, 2}, {3, 4, 2}) == doctest::Approx(5.0));

  const auto m = distance_matrix({{"a", {-1, 0, 2}}, {"b", {1, 0, 2}}});
  CHECK(m.meters(0, 1) == doctest::Approx(2.0));
  CHECK(m.meters(1, 0) == doctest::Approx(2.0));
  CHECK(m.meters(0, 0) == 0.0);
  const auto same = distance_matrix({{"a", {1, 1, 1}}, {"b", {1, 1, 1}}, {"c", {1, 1, 1}}});
  CHECK(same.meters.isZero());
  CHECK_THROWS_AS(distance_matrix({{"a", {0, 0, 1}}}), Error);
}

TEST_CASE("property: distance matrix is a metric") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LabeledCentroid> objs;
    for (int i = 0; i < 5; ++i) objs.push_back({"o" + std::to_string(i), {d(rng), d(rng), d(rng)}});
    const auto m = distance_matrix(objs).meters;
    for (int i = 0; i < 5; ++i) {
      CHECK(m(i, i) == 0.0);
      for (int j = 0; j < 5; ++j) {
        CHECK(m(i, j) == m(j, i));
        CHECK(m(i, j) >= 0.0);
        for (int k = 0; k < 5; ++k) CHECK(m(i, k) <= m(i, j) + m(j, k) + 1e-12);
      }
    }
  }
}

TEST_CASE("bounding boxes") {
  CHECK(scale_bbox({40, 40, 60, 60}, 1.5, 100, 100) == BBox{35, 35, 65, 65});
  CHECK(scale_bbox({40, 40, 60, 60}, 1.0, 100, 100) == BBox{40, 40, 60, 60});
  CHECK(scale_bbox({0, 80, 20, 100}, 2.0, 100, 100) == BBox{0, 70, 30, 100});
  CHECK_THROWS_AS(scale_bbox({0, 0, 1, 1}, 0.5, 10, 10), Error);
  CHECK(to_global({0, 0, 10, 10}, 25, 25) == BBox{25, 25, 35, 35});
  CHECK(bbox_iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(bbox_iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0));
  CHECK(bbox_iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
  CHECK(bbox_area({2, 3, 7, 5}) == 10.0);
}

TEST_CASE("property: scale_bbox keeps the centre and bounds the area") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pos(0, 900), size(1, 300), factor(1.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double x0 = 1000 + pos(rng), y0 = 1000 + pos(rng);
    const BBox b{x0, y0, x0 + size(rng), y0 + size(rng)};
    const double s = factor(rng);
    const auto big = scale_bbox(b, s, 1e6, 1e6);
    CHECK(0.5 * (big.x0 + big.x1) == doctest::Approx(0.5 * (b.x0 + b.x1)));
    CHECK(bbox_area(big) <= bbox_area(b) * s * s * (1 + 1e-12));
    const auto clamped = scale_bbox(b, s, 1500, 1500);
    CHECK(clamped.x0 >= 0.0);
    CHECK(clamped.x1 <= 1500.0);
    CHECK(bbox_area(clamped) <= bbox_area(b) * s * s * (1 + 1e-12));
  }
}

TEST_CASE("mask RLE round trips and matches COCO encoding") {
  Mask m(4, 3);
  m.set(1, 0);
  m.set(1, 1);
  m.set(2, 2);
  // Column-major runs: col0 000, col1 110, col2 001, col3 000 -> 3,2,3,1,3
  CHECK(m.to_counts() == std::vector<std::uint32_t>{3, 2, 3, 1, 3});
  CHECK(Mask::from_rle(m.to_rle(), 4, 3) == m);
  CHECK(Mask::from_counts(m.to_counts(), 4, 3) == m);
  // Known pycocotools string for counts [0, 5, 2] on a 7x1 mask.
  Mask lead(1, 7);
  for (int v = 0; v < 5; ++v) lead.set(0, v);
  CHECK(lead.to_counts() == std::vector<std::uint32_t>{0, 5, 2});
  CHECK(lead.to_rle() == "052");
  CHECK_THROWS_AS(Mask::from_counts({3, 3}, 4, 3), Error);

  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    Mask r(37, 23);
    for (int v = 0; v < 23; ++v)
      for (int u = 0; u < 37; ++u)
        if (rng() % 3 == 0) r.set(u, v);
    CHECK(Mask::from_rle(r.to_rle(), 37, 23) == r);
  }
}

TEST_CASE("mask erosion") {
  Mask m(5, 5);
  for (int v = 1; v <= 3; ++v)
    for (int u = 1; u <= 3; ++u) m.set(u, v);
  const auto e = m.eroded(1);
  CHECK(e.count() == 1);
  CHECK(e.get(2, 2));
}

TEST_CASE("depth PGM round trip and from_fov") {
  const auto path = std::filesystem::temp_directory_path() / "roomgraph_depth_test.pgm";
  DepthMap d{3, 2, {0.0f, 1.0f, 2.5f, 0.001f, 10.0f, 65.535f}};
  write_depth_pgm(path, d, 0.001);
  const auto back = read_depth(path, 0.001);
  REQUIRE(back.values.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(back.values[i] == doctest::Approx(d.values[i]).epsilon(1e-6));
  std::filesystem::remove(path);

  const auto k = Intrinsics::from_fov(640, 480, 60.0);
  CHECK(k.cx == 320.0);
  CHECK(k.fx == doctest::Approx(320.0 / std::tan(M_PI / 6)));
  CHECK_NOTHROW(k.validate());
}
