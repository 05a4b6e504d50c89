#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/expr.hpp"
#include "pinnkit/random.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

using Point2 = std::array<double, 2>;

/// Points drawn from a domain. `area` is the measure each point stands for;
/// boundary draws carry unit outward normals, interior draws carry sdf
/// values. `columns` holds any attached observations (e.g. measured u).
struct SampleBatch {
  std::vector<std::string> symbols;
  Tensor points;   // N x d
  Tensor normals;  // N x d, boundary only
  Tensor area;     // N x 1
  Tensor sdf;      // N x 1, interior only
  std::map<std::string, Tensor> columns;

  std::size_t size() const { return points.rows(); }

  /// Coordinate column j as an N x 1 tensor.
  Tensor coordinate(std::size_t j) const {
    std::vector<double> v(size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = points(i, j);
    return Tensor::column(std::move(v));
  }
};

namespace detail {

inline Tensor stack_rows(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) return Tensor{};
  if (a.cols() != b.cols()) throw DimensionError("stack_rows: column counts disagree");
  auto v = a.to_vector();
  const auto w = b.values();
  v.insert(v.end(), w.begin(), w.end());
  return Tensor(a.rows() + b.rows(), a.cols(), std::move(v));
}

inline Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (!a.defined()) return Tensor{};
  std::vector<double> v;
  v.reserve(rows.size() * a.cols());
  for (auto r : rows)
    for (std::size_t c = 0; c < a.cols(); ++c) v.push_back(a(r, c));
  return Tensor(rows.size(), a.cols(), std::move(v));
}

}  // namespace detail

/// Rows of `a` followed by rows of `b`. Optional parts survive only if both
/// batches have them.
inline SampleBatch concat(const SampleBatch& a, const SampleBatch& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.symbols != b.symbols) throw DimensionError("concat: batches use different symbols");
  SampleBatch out;
  out.symbols = a.symbols;
  out.points = detail::stack_rows(a.points, b.points);
  out.normals = detail::stack_rows(a.normals, b.normals);
  out.area = detail::stack_rows(a.area, b.area);
  out.sdf = detail::stack_rows(a.sdf, b.sdf);
  for (const auto& [name, col] : a.columns) {
    auto it = b.columns.find(name);
    if (it != b.columns.end()) out.columns[name] = detail::stack_rows(col, it->second);
  }
  return out;
}

inline SampleBatch select(const SampleBatch& a, std::span<const std::size_t> rows) {
  SampleBatch out;
  out.symbols = a.symbols;
  out.points = detail::select_rows(a.points, rows);
  out.normals = detail::select_rows(a.normals, rows);
  out.area = detail::select_rows(a.area, rows);
  out.sdf = detail::select_rows(a.sdf, rows);
  for (const auto& [name, col] : a.columns) out.columns[name] = detail::select_rows(col, rows);
  return out;
}

// ============================================================================
// Polygon helpers
// ============================================================================

inline double signed_area(std::span<const Point2> v) {
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& p = v[i];
    const auto& q = v[(i + 1) % v.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;
}

inline double segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a[0] + t * dx - p[0], ey = a[1] + t * dy - p[1];
  return std::sqrt(ex * ex + ey * ey);
}

/// Ray-casting parity test; points on an edge count as inside.
inline bool polygon_contains(std::span<const Point2> v, const Point2& p) {
  if (v.size() < 3 || signed_area(v) == 0.0) {
    throw ContractError("polygon_contains: degenerate polygon");
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (segment_distance(p, v[i], v[(i + 1) % v.size()]) <= 1e-12) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const auto& a = v[i];
    const auto& b = v[j];
    if ((a[1] > p[1]) != (b[1] > p[1])) {
      const double x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
      if (p[0] < x) inside = !inside;
    }
  }
  return inside;
}

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

inline bool on_segment(const Point2& p, const Point2& a, const Point2& b) {
  return std::min(a[0], b[0]) <= p[0] && p[0] <= std::max(a[0], b[0]) &&
         std::min(a[1], b[1]) <= p[1] && p[1] <= std::max(a[1], b[1]);
}

inline bool segments_touch(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  return (d1 == 0 && on_segment(a, c, d)) || (d2 == 0 && on_segment(b, c, d)) ||
         (d3 == 0 && on_segment(c, a, b)) || (d4 == 0 && on_segment(d, a, b));
}

// ============================================================================
// Shape implementations
// ============================================================================

struct Box {
  std::vector<double> lo, hi;
  double volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lo.size(); ++i) v *= std::max(0.0, hi[i] - lo[i]);
    return v;
  }
};

class Shape {
 public:
  virtual ~Shape() = default;
  virtual int dim() const = 0;
  virtual double sdf(std::span<const double> p) const = 0;
  virtual Box bounds() const = 0;
  /// Total measure of the candidate distribution used for boundary draws.
  virtual double proposal_measure() const = 0;
  /// Draws a candidate boundary point and its outward normal; returns false
  /// if the candidate is not on this shape's boundary.
  virtual bool propose_boundary(std::mt19937_64& rng, double* p, double* n) const = 0;
};

class IntervalShape final : public Shape {
 public:
  IntervalShape(double a, double b) : a_(a), b_(b) {}
  int dim() const override { return 1; }
  double sdf(std::span<const double> p) const override { return std::min(p[0] - a_, b_ - p[0]); }
  Box bounds() const override { return {{a_}, {b_}}; }
  double proposal_measure() const override { return 2.0; }
  bool propose_boundary(std::mt19937_64& rng, double* p, double* n) const override {
    const bool left = uniform01(rng) < 0.5;
    p[0] = left ? a_ : b_;
    n[0] = left ? -1.0 : 1.0;
    return true;
  }

 private:
  double a_, b_;
};

class RectangleShape final : public Shape {
 public:
  RectangleShape(Point2 lo, Point2 hi) : lo_(lo), hi_(hi) {}
  int dim() const override { return 2; }
  double sdf(std::span<const double> p) const override {
    const double dx = std::min(p[0] - lo_[0], hi_[0] - p[0]);
    const double dy = std::min(p[1] - lo_[1], hi_[1] - p[1]);
    if (dx >= 0 && dy >= 0) return std::min(dx, dy);
    const double ox = std::max(-dx, 0.0), oy = std::max(-dy, 0.0);
    return -std::sqrt(ox * ox + oy * oy);
  }
  Box bounds() const override { return {{lo_[0], lo_[1]}, {hi_[0], hi_[1]}}; }
  double proposal_measure() const override {
    return 2.0 * ((hi_[0] - lo_[0]) + (hi_[1] - lo_[1]));
  }
  bool propose_boundary(std::mt19937_64& rng, double* p, double* n) const override {
    const double w = hi_[0] - lo_[0], h = hi_[1] - lo_[1];
    double s = uniform01(rng) * proposal_measure();
    if (s < w) {
      p[0] = lo_[0] + s; p[1] = lo_[1]; n[0] = 0; n[1] = -1;
    } else if ((s -= w) < h) {
      p[0] = hi_[0]; p[1] = lo_[1] + s; n[0] = 1; n[1] = 0;
    } else if ((s -= h) < w) {
      p[0] = hi_[0] - s; p[1] = hi_[1]; n[0] = 0; n[1] = 1;
    } else {
      s -= w;
      p[0] = lo_[0]; p[1] = hi_[1] - std::min(s, h); n[0] = -1; n[1] = 0;
    }
    return true;
  }

 private:
  Point2 lo_, hi_;
};

class CircleShape final : public Shape {
 public:
  CircleShape(Point2 c, double r) : c_(c), r_(r) {}
  int dim() const override { return 2; }
  double sdf(std::span<const double> p) const override {
    return r_ - std::hypot(p[0] - c_[0], p[1] - c_[1]);
  }
  Box bounds() const override { return {{c_[0] - r_, c_[1] - r_}, {c_[0] + r_, c_[1] + r_}}; }
  double proposal_measure() const override { return 2.0 * std::numbers::pi * r_; }
  bool propose_boundary(std::mt19937_64& rng, double* p, double* n) const override {
    const double th = 2.0 * std::numbers::pi * uniform01(rng);
    n[0] = std::cos(th);
    n[1] = std::sin(th);
    p[0] = c_[0] + r_ * n[0];
    p[1] = c_[1] + r_ * n[1];
    return true;
  }

 private:
  Point2 c_;
  double r_;
};

class PolygonShape final : public Shape {
 public:
  explicit PolygonShape(std::vector<Point2> v) : v_(std::move(v)) {
    if (signed_area(v_) < 0) std::reverse(v_.begin(), v_.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) {
      const auto& a = v_[i];
      const auto& b = v_[(i + 1) % v_.size()];
      acc += std::hypot(b[0] - a[0], b[1] - a[1]);
      cumulative_.push_back(acc);
    }
  }
  int dim() const override { return 2; }
  double sdf(std::span<const double> p) const override {
    const Point2 q{p[0], p[1]};
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v_.size(); ++i) {
      d = std::min(d, segment_distance(q, v_[i], v_[(i + 1) % v_.size()]));
    }
    if (d == 0.0) return 0.0;
    return polygon_contains(v_, q) ? d : -d;
  }
  Box bounds() const override {
    Box b{{v_[0][0], v_[0][1]}, {v_[0][0], v_[0][1]}};
    for (const auto& p : v_) {
      for (int k = 0; k < 2; ++k) {
        b.lo[k] = std::min(b.lo[k], p[k]);
        b.hi[k] = std::max(b.hi[k], p[k]);
      }
    }
    return b;
  }
  double proposal_measure() const override { return cumulative_.back(); }
  bool propose_boundary(std::mt19937_64& rng, double* p, double* n) const override {
    const double s = uniform01(rng) * cumulative_.back();
    const auto i = static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end(), s) - cumulative_.begin());
    const std::size_t e = std::min(i, v_.size() - 1);
    const auto& a = v_[e];
    const auto& b = v_[(e + 1) % v_.size()];
    const double start = e == 0 ? 0.0 : cumulative_[e - 1];
    const double len = cumulative_[e] - start;
    const double t = std::clamp((s - start) / len, 0.0, 1.0);
    p[0] = a[0] + t * (b[0] - a[0]);
    p[1] = a[1] + t * (b[1] - a[1]);
    // Counter-clockwise order: the outward normal is the edge rotated by -90 degrees.
    n[0] = (b[1] - a[1]) / len;
    n[1] = -(b[0] - a[0]) / len;
    return true;
  }

 private:
  std::vector<Point2> v_;
  std::vector<double> cumulative_;
};

enum class CsgOp { unite, subtract, intersect };

class CsgShape final : public Shape {
 public:
  CsgShape(CsgOp op, std::shared_ptr<const Shape> a, std::shared_ptr<const Shape> b)
      : op_(op), a_(std::move(a)), b_(std::move(b)) {}
  int dim() const override { return a_->dim(); }
  double sdf(std::span<const double> p) const override {
    const double sa = a_->sdf(p), sb = b_->sdf(p);
    switch (op_) {
      case CsgOp::unite: return std::max(sa, sb);
      case CsgOp::intersect: return std::min(sa, sb);
      case CsgOp::subtract: return std::min(sa, -sb);
    }
    return 0.0;
  }
  Box bounds() const override {
    Box ba = a_->bounds(), bb = b_->bounds();
    if (op_ == CsgOp::subtract) return ba;
    for (std::size_t k = 0; k < ba.lo.size(); ++k) {
      if (op_ == CsgOp::unite) {
        ba.lo[k] = std::min(ba.lo[k], bb.lo[k]);
        ba.hi[k] = std::max(ba.hi[k], bb.hi[k]);
      } else {
        ba.lo[k] = std::max(ba.lo[k], bb.lo[k]);
        ba.hi[k] = std::min(ba.hi[k], bb.hi[k]);
      }
    }
    return ba;
  }
  double proposal_measure() const override {
    return a_->proposal_measure() + b_->proposal_measure();
  }
  bool propose_boundary(std::mt19937_64& rng, double* p, double* n) const override {
    const double ma = a_->proposal_measure();
    const bool from_a = uniform01(rng) * proposal_measure() < ma;
    const Shape& self = from_a ? *a_ : *b_;
    const Shape& other = from_a ? *b_ : *a_;
    if (!self.propose_boundary(rng, p, n)) return false;
    const double so = other.sdf(std::span<const double>(p, static_cast<std::size_t>(dim())));
    switch (op_) {
      case CsgOp::unite:
        return from_a ? so <= 0.0 : so < 0.0;
      case CsgOp::intersect:
        return from_a ? so >= 0.0 : so > 0.0;
      case CsgOp::subtract:
        if (from_a) return so <= 0.0;
        for (int k = 0; k < dim(); ++k) n[k] = -n[k];
        return so >= 0.0;
    }
    return false;
  }

 private:
  CsgOp op_;
  std::shared_ptr<const Shape> a_, b_;
};

}  // namespace detail

/// Optional sampling filter over coordinate symbols.
using Sieve = std::optional<Predicate>;

/// Immutable geometric domain with a signed distance field (positive
/// inside) and boundary/interior samplers. Compose with + (union),
/// - (difference) and & (intersection).
class Geometry {
 public:
  /// Draw budget before a sieve that accepts nothing is reported as empty.
  static constexpr std::size_t kEmptyDrawBudget = 1'000'000;

  static Geometry interval(double a, double b) {
    if (!(a < b)) throw ContractError("interval: need a < b");
    return Geometry(std::make_shared<detail::IntervalShape>(a, b));
  }
  static Geometry rectangle(Point2 p1, Point2 p2) {
    if (!(p1[0] < p2[0] && p1[1] < p2[1])) {
      throw ContractError("rectangle: need p1 < p2 componentwise");
    }
    return Geometry(std::make_shared<detail::RectangleShape>(p1, p2));
  }
  static Geometry circle(Point2 center, double radius) {
    if (!(radius > 0)) throw ContractError("circle: radius must be positive");
    return Geometry(std::make_shared<detail::CircleShape>(center, radius));
  }
  static Geometry polygon(std::vector<Point2> vertices) {
    if (vertices.size() < 3) throw ContractError("polygon: need at least 3 vertices");
    if (signed_area(vertices) == 0.0) throw ContractError("polygon: zero area");
    const std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (j == i + 1 || (i == 0 && j == n - 1)) continue;
        if (detail::segments_touch(vertices[i], vertices[(i + 1) % n], vertices[j],
                                   vertices[(j + 1) % n])) {
          throw ContractError("polygon: edges " + std::to_string(i) + " and " +
                              std::to_string(j) + " intersect");
        }
      }
    }
    return Geometry(std::make_shared<detail::PolygonShape>(std::move(vertices)));
  }

  friend Geometry operator+(const Geometry& a, const Geometry& b) {
    return csg(detail::CsgOp::unite, a, b);
  }
  friend Geometry operator-(const Geometry& a, const Geometry& b) {
    return csg(detail::CsgOp::subtract, a, b);
  }
  friend Geometry operator&(const Geometry& a, const Geometry& b) {
    return csg(detail::CsgOp::intersect, a, b);
  }

  int dim() const { return shape_->dim(); }

  std::vector<std::string> default_symbols() const {
    return dim() == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
  }

  double sdf(std::span<const double> p) const {
    if (p.size() != static_cast<std::size_t>(dim())) {
      throw DimensionError("sdf: point has " + std::to_string(p.size()) +
                           " coordinates, geometry is " + std::to_string(dim()) + "-D");
    }
    return shape_->sdf(p);
  }

  Tensor sdf(const Tensor& points) const {
    if (points.cols() != static_cast<std::size_t>(dim())) {
      throw DimensionError("sdf: points are " + points.shape_str() + ", geometry is " +
                           std::to_string(dim()) + "-D");
    }
    std::vector<double> out(points.rows());
    const auto v = points.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = shape_->sdf(v.subspan(i * points.cols(), points.cols()));
    }
    return Tensor::column(std::move(out));
  }

  std::pair<std::vector<double>, std::vector<double>> bounds() const {
    auto b = shape_->bounds();
    return {b.lo, b.hi};
  }

  /// Uniform points on the (sieved) boundary with outward normals. Each
  /// point's area is the estimated sieved boundary measure divided by n.
  SampleBatch sample_boundary(std::size_t n, std::uint64_t seed, const Sieve& sieve = std::nullopt,
                              std::vector<std::string> symbols = {}) const {
    if (n == 0) throw ContractError("sample_boundary: n must be >= 1");
    if (symbols.empty()) symbols = default_symbols();
    check_symbols(symbols);
    const std::size_t d = static_cast<std::size_t>(dim());
    std::mt19937_64 rng(seed);
    std::vector<double> pts, nrm;
    pts.reserve(n * d);
    nrm.reserve(n * d);
    std::vector<double> p(d), nv(d);
    std::size_t accepted = 0, draws = 0;
    while (accepted < n) {
      check_budget(accepted, draws, n);
      ++draws;
      if (!shape_->propose_boundary(rng, p.data(), nv.data())) continue;
      if (sieve && !sieve->holds_at(p, symbols)) continue;
      pts.insert(pts.end(), p.begin(), p.end());
      nrm.insert(nrm.end(), nv.begin(), nv.end());
      ++accepted;
    }
    const double measure =
        shape_->proposal_measure() * static_cast<double>(accepted) / static_cast<double>(draws);
    SampleBatch b;
    b.symbols = std::move(symbols);
    b.points = Tensor(n, d, std::move(pts));
    b.normals = Tensor(n, d, std::move(nrm));
    b.area = Tensor::filled(n, 1, measure / static_cast<double>(n));
    return b;
  }

  /// Uniform points inside (sdf > 0, sieve true) by rejection from the
  /// bounding box; area is the estimated measure divided by n.
  SampleBatch sample_interior(std::size_t n, std::uint64_t seed, const Sieve& sieve = std::nullopt,
                              std::vector<std::string> symbols = {}) const {
    if (n == 0) throw ContractError("sample_interior: n must be >= 1");
    if (symbols.empty()) symbols = default_symbols();
    check_symbols(symbols);
    const std::size_t d = static_cast<std::size_t>(dim());
    const auto box = shape_->bounds();
    if (box.volume() <= 0.0) throw EmptyRegionError("sample_interior: empty bounding box");
    std::mt19937_64 rng(seed);
    std::vector<double> pts, sdfs;
    pts.reserve(n * d);
    sdfs.reserve(n);
    std::vector<double> p(d);
    std::size_t accepted = 0, draws = 0;
    while (accepted < n) {
      check_budget(accepted, draws, n);
      ++draws;
      for (std::size_t k = 0; k < d; ++k) p[k] = uniform(rng, box.lo[k], box.hi[k]);
      const double s = shape_->sdf(p);
      if (!(s > 0.0)) continue;
      if (sieve && !sieve->holds_at(p, symbols)) continue;
      pts.insert(pts.end(), p.begin(), p.end());
      sdfs.push_back(s);
      ++accepted;
    }
    const double measure = box.volume() * static_cast<double>(accepted) / static_cast<double>(draws);
    SampleBatch b;
    b.symbols = std::move(symbols);
    b.points = Tensor(n, d, std::move(pts));
    b.sdf = Tensor::column(std::move(sdfs));
    b.area = Tensor::filled(n, 1, measure / static_cast<double>(n));
    return b;
  }

 private:
  explicit Geometry(std::shared_ptr<const detail::Shape> s) : shape_(std::move(s)) {}

  static Geometry csg(detail::CsgOp op, const Geometry& a, const Geometry& b) {
    if (a.dim() != b.dim()) throw DimensionError("CSG operands have different dimensions");
    return Geometry(std::make_shared<detail::CsgShape>(op, a.shape_, b.shape_));
  }

  void check_symbols(const std::vector<std::string>& symbols) const {
    if (symbols.size() != static_cast<std::size_t>(dim())) {
      throw DimensionError("geometry is " + std::to_string(dim()) + "-D but " +
                           std::to_string(symbols.size()) + " coordinate symbols were given");
    }
  }

  static void check_budget(std::size_t accepted, std::size_t draws, std::size_t n) {
    if (accepted == 0 && draws >= kEmptyDrawBudget) {
      throw EmptyRegionError("sampling accepted no point in " + std::to_string(draws) + " draws");
    }
    if (draws >= kEmptyDrawBudget + 1000 * n) {
      throw EmptyRegionError("sampling region too small: " + std::to_string(accepted) + " of " +
                             std::to_string(n) + " points after " + std::to_string(draws) +
                             " draws");
    }
  }

  std::shared_ptr<const detail::Shape> shape_;
};

}  // namespace pinnkit
