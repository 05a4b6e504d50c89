#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "pinnkit/geometry.hpp"

namespace pinnkit {
namespace {

double sum_of(const Tensor& t) {
  double s = 0;
  for (double v : t.values()) s += v;
  return s;
}

double sdf_at(const Geometry& g, std::vector<double> p) { return g.sdf(std::span<const double>(p)); }

const std::vector<Point2> kLetterI{{0, 0}, {3, 0}, {3, 1}, {2, 1}, {2, 4}, {3, 4},
                                   {3, 5}, {0, 5}, {0, 4}, {1, 4}, {1, 1}, {0, 1}};

TEST(Sdf, Examples) {
  auto sq = Geometry::rectangle({0, 0}, {1, 1});
  EXPECT_DOUBLE_EQ(sdf_at(sq, {0.5, 0.5}), 0.5);
  auto c = Geometry::circle({0, 0}, 2);
  EXPECT_DOUBLE_EQ(sdf_at(c, {0, 0}), 2.0);
  EXPECT_DOUBLE_EQ(sdf_at(c, {3, 0}), -1.0);
  EXPECT_DOUBLE_EQ(sdf_at(Geometry::interval(0, 5), {1}), 1.0);
  EXPECT_DOUBLE_EQ(sdf_at(sq, {2, 2}), -std::sqrt(2.0));
}

TEST(Sdf, DimensionMismatch) {
  auto sq = Geometry::rectangle({0, 0}, {1, 1});
  EXPECT_THROW(sq.sdf(Tensor::zeros(3, 1)), DimensionError);
  EXPECT_THROW(sdf_at(sq, {0.5}), DimensionError);
  EXPECT_THROW(sq + Geometry::interval(0, 1), DimensionError);
}

TEST(Sdf, HollowSquareCenterIsOutside) {
  auto g = Geometry::rectangle({0, 0}, {1, 1}) - Geometry::rectangle({0.25, 0.25}, {0.75, 0.75});
  EXPECT_LT(sdf_at(g, {0.5, 0.5}), 0.0);
  // Brute-force classification on a 200x200 grid.
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 200; ++j) {
      const double x = -0.1 + 1.2 * (i + 0.5) / 200, y = -0.1 + 1.2 * (j + 0.5) / 200;
      const bool outer = x > 0 && x < 1 && y > 0 && y < 1;
      const bool inner = x >= 0.25 && x <= 0.75 && y >= 0.25 && y <= 0.75;
      const double s = sdf_at(g, {x, y});
      if (s == 0.0) continue;
      EXPECT_EQ(s > 0, outer && !inner) << x << "," << y;
    }
  }
}

TEST(Validation, Invariants) {
  EXPECT_THROW(Geometry::interval(1, 1), ContractError);
  EXPECT_THROW(Geometry::rectangle({0, 0}, {1, 0}), ContractError);
  EXPECT_THROW(Geometry::circle({0, 0}, 0), ContractError);
  EXPECT_THROW(Geometry::polygon({{0, 0}, {1, 0}}), ContractError);
  EXPECT_THROW(Geometry::polygon({{0, 0}, {1, 0}, {2, 0}}), ContractError);
  // Bow tie.
  EXPECT_THROW(Geometry::polygon({{0, 0}, {1, 1}, {1, 0}, {0, 1}}), ContractError);
  EXPECT_NO_THROW(Geometry::polygon(kLetterI));
}

TEST(Polygon, ClockwiseInputIsNormalized) {
  auto ccw = Geometry::polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  auto cw = Geometry::polygon({{0, 1}, {1, 1}, {1, 0}, {0, 0}});
  EXPECT_DOUBLE_EQ(sdf_at(cw, {0.5, 0.5}), 0.5);
  auto a = ccw.sample_boundary(200, 3);
  auto b = cw.sample_boundary(200, 3);
  for (std::size_t i = 0; i < 200; ++i) {
    // Stepping against the normal lands inside.
    const std::vector<double> p{b.points(i, 0) - 1e-4 * b.normals(i, 0),
                                b.points(i, 1) - 1e-4 * b.normals(i, 1)};
    EXPECT_GE(sdf_at(cw, p), 0.0);
  }
  EXPECT_EQ(a.size(), 200u);
}

TEST(PolygonContains, Examples) {
  const std::vector<Point2> unit{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_TRUE(polygon_contains(unit, {0.5, 0.5}));
  EXPECT_FALSE(polygon_contains(unit, {2, 2}));
  EXPECT_TRUE(polygon_contains(unit, {1, 0.5}));
  EXPECT_TRUE(polygon_contains(kLetterI, {1.5, 2.5}));
  EXPECT_THROW(polygon_contains(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}}, {0, 0}),
               ContractError);
}

TEST(PolygonContains, LetterIMatchesRectangleDecomposition) {
  // The I is three rectangles: bottom bar, stem, top bar.
  auto oracle = [](double x, double y) {
    return (x > 0 && x < 3 && y > 0 && y < 1) || (x > 1 && x < 2 && y >= 1 && y <= 4) ||
           (x > 0 && x < 3 && y > 4 && y < 5);
  };
  for (int i = 0; i < 120; ++i) {
    for (int j = 0; j < 140; ++j) {
      const double x = -0.5 + 4.0 * (i + 0.37) / 120, y = -0.5 + 6.0 * (j + 0.61) / 140;
      EXPECT_EQ(polygon_contains(kLetterI, {x, y}), oracle(x, y)) << x << "," << y;
    }
  }
}

TEST(SampleBoundary, UnitSquarePerimeter) {
  auto b = Geometry::rectangle({0, 0}, {1, 1}).sample_boundary(10000, 1);
  EXPECT_EQ(b.size(), 10000u);
  EXPECT_NEAR(sum_of(b.area), 4.0, 0.08);
}

TEST(SampleBoundary, SieveKeepsLeftAndRightSides) {
  auto rec = Geometry::rectangle({-1, -1}, {1, 1});
  auto b = rec.sample_boundary(1000, 7, Predicate::parse("(y > -1.) & (y < 1.)"));
  ASSERT_EQ(b.size(), 1000u);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(std::abs(b.points(i, 0)), 1.0);
    EXPECT_EQ(b.normals(i, 0), b.points(i, 0));
    EXPECT_EQ(b.normals(i, 1), 0.0);
  }
  // Sieved measure is the two vertical sides.
  EXPECT_NEAR(sum_of(b.area), 4.0, 0.4);
}

TEST(SampleBoundary, IntervalEndpoints) {
  auto b = Geometry::interval(0, 5).sample_boundary(100, 2);
  bool saw0 = false, saw5 = false;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b.points(i, 0), n = b.normals(i, 0);
    EXPECT_TRUE((x == 0 && n == -1) || (x == 5 && n == 1));
    saw0 |= x == 0;
    saw5 |= x == 5;
  }
  EXPECT_TRUE(saw0 && saw5);
}

TEST(SampleBoundary, EmptySieveFails) {
  auto sq = Geometry::rectangle({0, 0}, {1, 1});
  EXPECT_THROW(sq.sample_boundary(10, 1, Predicate::parse("x > 5")), EmptyRegionError);
  EXPECT_THROW(sq.sample_interior(10, 1, Predicate::parse("x > 5")), EmptyRegionError);
  EXPECT_THROW(sq.sample_boundary(0, 1), ContractError);
}

TEST(SampleBoundary, CustomSymbols) {
  auto g = Geometry::rectangle({0, 0}, {1, 2});
  auto b = g.sample_interior(50, 1, Predicate::parse("t < 0.5"), {"x", "t"});
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_LT(b.points(i, 1), 0.5);
  EXPECT_THROW(g.sample_interior(5, 1, std::nullopt, {"x"}), DimensionError);
}

TEST(SampleInterior, Measures) {
  auto sq = Geometry::rectangle({0, 0}, {1, 1});
  auto b = sq.sample_interior(10000, 4);
  EXPECT_NEAR(sum_of(b.area), 1.0, 0.02);
  for (double s : b.sdf.values()) EXPECT_GT(s, 0.0);
  auto two = sq + Geometry::rectangle({2, 0}, {3, 1});
  EXPECT_NEAR(sum_of(two.sample_interior(10000, 5).area), 2.0, 0.04);
  auto disk = Geometry::circle({0, 0}, 1);
  EXPECT_NEAR(sum_of(disk.sample_interior(10000, 6).area), std::numbers::pi,
              0.02 * std::numbers::pi);
  EXPECT_NEAR(sum_of(disk.sample_boundary(10000, 6).area), 2 * std::numbers::pi,
              0.02 * 2 * std::numbers::pi);
  EXPECT_NEAR(sum_of(Geometry::interval(0, 5).sample_interior(10000, 6).area), 5.0, 0.1);
}

TEST(SampleInterior, LetterMeasures) {
  // I: 3 + 1*3 + 3 = 9; D: 4x5 box minus two half-unit corners, minus 2x3 hole = 13.
  auto I = Geometry::polygon(kLetterI);
  EXPECT_NEAR(sum_of(I.sample_interior(10000, 8).area), 9.0, 0.18);
  auto D = Geometry::polygon({{4, 0}, {7, 0}, {8, 1}, {8, 4}, {7, 5}, {4, 5}}) -
           Geometry::polygon({{5, 1}, {7, 1}, {7, 4}, {5, 4}});
  EXPECT_NEAR(sum_of(D.sample_interior(10000, 9).area), 13.0, 0.26);
  // Perimeter of I: 3+1+1+3+1+1+3+1+1+3+1+1 = 20.
  EXPECT_NEAR(sum_of(I.sample_boundary(10000, 10).area), 20.0, 0.4);
}

TEST(Sampling, Deterministic) {
  auto g = Geometry::circle({0, 0}, 1) - Geometry::rectangle({0, -2}, {2, 2});
  auto a = g.sample_boundary(300, 42), b = g.sample_boundary(300, 42);
  EXPECT_EQ(a.points.to_vector(), b.points.to_vector());
  EXPECT_EQ(a.normals.to_vector(), b.normals.to_vector());
  EXPECT_EQ(a.area.to_vector(), b.area.to_vector());
  auto c = g.sample_interior(300, 42), d = g.sample_interior(300, 42);
  EXPECT_EQ(c.points.to_vector(), d.points.to_vector());
  EXPECT_EQ(c.sdf.to_vector(), d.sdf.to_vector());
  EXPECT_NE(g.sample_interior(300, 43).points.to_vector(), c.points.to_vector());
}

TEST(SampleBatch, ConcatAndSelect) {
  auto sq = Geometry::rectangle({0, 0}, {1, 1});
  auto a = sq.sample_boundary(3, 1), b = sq.sample_boundary(2, 2);
  auto c = concat(a, b);
  EXPECT_EQ(c.size(), 5u);
  EXPECT_EQ(c.normals.rows(), 5u);
  EXPECT_EQ(c.points(3, 0), b.points(0, 0));
  const std::vector<std::size_t> rows{4, 0};
  auto s = select(c, rows);
  EXPECT_EQ(s.points(0, 1), b.points(1, 1));
  EXPECT_EQ(s.area(1, 0), a.area(0, 0));
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

void expect_outward_normals(const Geometry& g, const SampleBatch& b,
                            const std::function<bool(double, double)>& near_corner) {
  const double eps = 1e-4;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double x = b.points(i, 0), y = b.points(i, 1);
    const double nx = b.normals(i, 0), ny = b.normals(i, 1);
    EXPECT_NEAR(std::hypot(nx, ny), 1.0, 1e-9);
    if (near_corner(x, y)) continue;
    EXPECT_LT(sdf_at(g, {x + eps * nx, y + eps * ny}), 0.0) << x << "," << y;
    EXPECT_GT(sdf_at(g, {x - eps * nx, y - eps * ny}), 0.0) << x << "," << y;
    ++checked;
  }
  EXPECT_GT(checked, b.size() / 2);
}

std::function<bool(double, double)> near_any(std::vector<Point2> corners) {
  return [corners](double x, double y) {
    for (const auto& c : corners)
      if (std::hypot(x - c[0], y - c[1]) < 1e-3) return true;
    return false;
  };
}

TEST(Properties, NormalsPointOutward) {
  auto sq = Geometry::rectangle({0, 0}, {2, 1});
  expect_outward_normals(sq, sq.sample_boundary(2000, 1),
                         near_any({{0, 0}, {2, 0}, {2, 1}, {0, 1}}));
  auto disk = Geometry::circle({1, -1}, 0.7);
  expect_outward_normals(disk, disk.sample_boundary(2000, 2), near_any({}));
  std::vector<Point2> icorners(kLetterI.begin(), kLetterI.end());
  auto I = Geometry::polygon(kLetterI);
  expect_outward_normals(I, I.sample_boundary(2000, 3), near_any(icorners));
  // Holed composite: the hole's normals point into the hole.
  auto holed = Geometry::rectangle({0, 0}, {4, 4}) - Geometry::circle({2, 2}, 1);
  expect_outward_normals(holed, holed.sample_boundary(2000, 4),
                         near_any({{0, 0}, {4, 0}, {4, 4}, {0, 4}}));
  auto lens = Geometry::circle({0, 0}, 1) & Geometry::circle({1, 0}, 1);
  const double h = std::sqrt(0.75);
  expect_outward_normals(lens, lens.sample_boundary(2000, 5), near_any({{0.5, h}, {0.5, -h}}));
  auto blob = Geometry::circle({0, 0}, 1) + Geometry::circle({1, 0}, 1);
  expect_outward_normals(blob, blob.sample_boundary(2000, 6), near_any({{0.5, h}, {0.5, -h}}));
}

TEST(Properties, AbsSdfIsDistanceToBoundaryCloud) {
  const std::size_t n = 10000;
  const double tol = 2.0 / std::sqrt(static_cast<double>(n));
  std::vector<Geometry> shapes{Geometry::rectangle({-1, 0}, {1, 0.5}),
                               Geometry::circle({0.3, 0.2}, 0.8), Geometry::polygon(kLetterI)};
  std::mt19937_64 rng(11);
  for (const auto& g : shapes) {
    auto cloud = g.sample_boundary(n, 12);
    auto [lo, hi] = g.bounds();
    for (int k = 0; k < 40; ++k) {
      const double x = uniform(rng, lo[0] - 0.5, hi[0] + 0.5);
      const double y = uniform(rng, lo[1] - 0.5, hi[1] + 0.5);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i)
        best = std::min(best, std::hypot(cloud.points(i, 0) - x, cloud.points(i, 1) - y));
      EXPECT_NEAR(std::abs(sdf_at(g, {x, y})), best, tol) << x << "," << y;
    }
  }
  auto seg = Geometry::interval(-1, 3);
  for (double x : {-2.0, 0.0, 1.0, 2.5, 4.0}) {
    EXPECT_DOUBLE_EQ(std::abs(sdf_at(seg, {x})), std::min(std::abs(x + 1), std::abs(x - 3)));
  }
}

Geometry random_primitive(std::mt19937_64& rng) {
  const double cx = uniform(rng, -1, 1), cy = uniform(rng, -1, 1);
  switch (rng() % 3) {
    case 0: return Geometry::circle({cx, cy}, uniform(rng, 0.3, 1.2));
    case 1:
      return Geometry::rectangle({cx - uniform(rng, 0.2, 1), cy - uniform(rng, 0.2, 1)},
                                 {cx + uniform(rng, 0.2, 1), cy + uniform(rng, 0.2, 1)});
    default: {
      const double r = uniform(rng, 0.4, 1.2);
      return Geometry::polygon({{cx - r, cy - r}, {cx + r, cy - r}, {cx, cy + r}});
    }
  }
}

TEST(Properties, CsgSignOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_primitive(rng), b = random_primitive(rng);
    const Geometry composites[] = {a + b, a & b, a - b};
    for (int i = 0; i < 200; ++i) {
      for (int j = 0; j < 200; ++j) {
        const std::vector<double> p{-2.5 + 5.0 * (i + 0.5) / 200, -2.5 + 5.0 * (j + 0.5) / 200};
        const double sa = a.sdf(p), sb = b.sdf(p);
        if (sa == 0.0 || sb == 0.0) continue;
        const bool ia = sa > 0, ib = sb > 0;
        ASSERT_EQ(composites[0].sdf(p) > 0, ia || ib);
        ASSERT_EQ(composites[1].sdf(p) > 0, ia && ib);
        ASSERT_EQ(composites[2].sdf(p) > 0, ia && !ib);
      }
    }
  }
}

TEST(Properties, BoundaryPointsLieOnCompositeBoundary) {
  auto g = (Geometry::rectangle({0, 0}, {2, 2}) - Geometry::circle({2, 2}, 1)) +
           Geometry::circle({0, 0}, 0.5);
  auto b = g.sample_boundary(3000, 9);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_NEAR(sdf_at(g, {b.points(i, 0), b.points(i, 1)}), 0.0, 1e-12);
  }
}

}  // namespace
}  // namespace pinnkit
