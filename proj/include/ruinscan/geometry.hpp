#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace ruinscan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct BoundingBox {
  double minX = 0.0, minY = 0.0, maxX = 0.0, maxY = 0.0;

  bool contains(const BoundingBox& o) const {
    return o.minX >= minX && o.maxX <= maxX && o.minY >= minY && o.maxY <= maxY;
  }
  bool overlaps(const BoundingBox& o) const {
    return o.minX <= maxX && o.maxX >= minX && o.minY <= maxY && o.maxY >= minY;
  }
  double area() const { return (maxX - minX) * (maxY - minY); }
};

BoundingBox bounding_box(std::span<const Vec2> pts);

// Signed shoelace area; positive for counter-clockwise rings. The ring may be
// given open or closed (a repeated closing vertex contributes nothing).
double signed_area(std::span<const Vec2> ring);

// Polyline length including the closing edge back to the first vertex.
double perimeter(std::span<const Vec2> ring);

// Even-odd ray-casting test. Points exactly on an edge are unspecified.
bool point_in_polygon(Vec2 p, std::span<const Vec2> ring);

// Andrew's monotone chain. Returns the hull counter-clockwise without a
// repeated closing vertex and without collinear points.
std::vector<Vec2> convex_hull(std::span<const Vec2> pts);

// Sutherland-Hodgman: clips `subject` (any simple ring) against the convex,
// counter-clockwise ring `clip`. The result may contain zero-width bridges
// when the subject is concave, which do not affect its shoelace area.
std::vector<Vec2> clip_to_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

// True when no two non-adjacent edges of the (open) ring intersect.
bool is_simple_ring(std::span<const Vec2> ring);

// Drops a repeated closing vertex and consecutive duplicates.
std::vector<Vec2> open_ring(std::span<const Vec2> ring);

// Accelerated even-odd test for polygons with many vertices: edges are
// bucketed into horizontal strips so each query scans one strip only.
class PolygonIndex {
 public:
  explicit PolygonIndex(std::span<const Vec2> ring);
  bool contains(Vec2 p) const;

 private:
  struct Edge {
    Vec2 a, b;
  };
  double minY_ = 0.0;
  double stripHeight_ = 1.0;
  std::vector<std::vector<Edge>> strips_;
};

}  // namespace ruinscan
