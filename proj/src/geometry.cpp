#include "ruinscan/geometry.hpp"

#include <algorithm>
#include <limits>

namespace ruinscan {

BoundingBox bounding_box(std::span<const Vec2> pts) {
  BoundingBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec2& p : pts) {
    b.minX = std::min(b.minX, p.x);
    b.minY = std::min(b.minY, p.y);
    b.maxX = std::max(b.maxX, p.x);
    b.maxY = std::max(b.maxY, p.y);
  }
  return b;
}

double signed_area(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  // Shift to the first vertex to limit cancellation with large coordinates.
  const Vec2 o = ring[0];
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i] - o;
    const Vec2 b = ring[(i + 1) % n] - o;
    acc += cross(a, b);
  }
  return 0.5 * acc;
}

double perimeter(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  double len = 0.0;
  for (std::size_t i = 0; i < n; ++i) len += norm(ring[(i + 1) % n] - ring[i]);
  return len;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> ring) {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xCross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xCross) inside = !inside;
    }
  }
  return inside;
}

std::vector<Vec2> convex_hull(std::span<const Vec2> pts) {
  std::vector<Vec2> p(pts.begin(), pts.end());
  std::sort(p.begin(), p.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;

  std::vector<Vec2> hull(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = p[i];
  }
  hull.resize(k - 1);
  return hull;
}

std::vector<Vec2> clip_to_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % m];
    const Vec2 dir = b - a;
    auto side = [&](Vec2 p) { return cross(dir, p - a); };  // >= 0: inside (left of edge)

    std::vector<Vec2> in;
    in.swap(out);
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 cur = in[i];
      const Vec2 prev = in[(i + n - 1) % n];
      const double sc = side(cur);
      const double sp = side(prev);
      if (sc >= 0) {
        if (sp < 0) out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        out.push_back(cur);
      } else if (sp >= 0) {
        out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
  }
  return out;
}

namespace {

int orient(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0) - (v < 0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const int o1 = orient(p1, p2, q1);
  const int o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1);
  const int o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

bool is_simple_ring(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a1 = ring[i];
    const Vec2 a2 = ring[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a1, a2, ring[j], ring[(j + 1) % n])) return false;
    }
  }
  return true;
}

std::vector<Vec2> open_ring(std::span<const Vec2> ring) {
  std::vector<Vec2> out;
  out.reserve(ring.size());
  for (const Vec2& p : ring) {
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  }
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

PolygonIndex::PolygonIndex(std::span<const Vec2> ring) {
  const BoundingBox b = bounding_box(ring);
  const std::size_t n = ring.size();
  const std::size_t strips = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(n))));
  minY_ = b.minY;
  stripHeight_ = std::max((b.maxY - b.minY) / double(strips), 1e-12);
  strips_.resize(strips);
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = ring[i];
    const Vec2 c = ring[j];
    if (a.y == c.y) continue;  // horizontal edges never straddle a ray
    const auto lo = static_cast<long>(std::floor((std::min(a.y, c.y) - minY_) / stripHeight_));
    const auto hi = static_cast<long>(std::floor((std::max(a.y, c.y) - minY_) / stripHeight_));
    for (long s = std::max(0L, lo); s <= std::min<long>(hi, long(strips) - 1); ++s) strips_[s].push_back({a, c});
  }
}

bool PolygonIndex::contains(Vec2 p) const {
  const double f = std::floor((p.y - minY_) / stripHeight_);
  if (f < 0 || f >= double(strips_.size())) return false;
  bool inside = false;
  for (const Edge& e : strips_[static_cast<std::size_t>(f)]) {
    if ((e.a.y > p.y) != (e.b.y > p.y)) {
      const double xCross = e.a.x + (p.y - e.a.y) * (e.b.x - e.a.x) / (e.b.y - e.a.y);
      if (p.x < xCross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace ruinscan
