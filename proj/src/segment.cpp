#include "ruinscan/segment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>

#include "parallel.hpp"
#include "ruinscan/error.hpp"

namespace ruinscan {

double Contour::area() const { return signed_area(vertices); }

Vec2 Mbb::major_axis() const { return {std::cos(angle), std::sin(angle)}; }
Vec2 Mbb::minor_axis() const { return {-std::sin(angle), std::cos(angle)}; }

std::vector<Vec2> Mbb::corners() const {
  const Vec2 u = major_axis() * (0.5 * lenMajor);
  const Vec2 v = minor_axis() * (0.5 * lenMinor);
  return {center - u - v, center + u - v, center + u + v, center - u + v};
}

Mbb Mbb::widened(double margin) const {
  Mbb out = *this;
  out.lenMajor += 2.0 * margin;
  out.lenMinor += 2.0 * margin;
  return out;
}

bool Mbb::contains(Vec2 p, double slack) const {
  const Vec2 d = p - center;
  return std::abs(dot(d, major_axis())) <= 0.5 * lenMajor + slack &&
         std::abs(dot(d, minor_axis())) <= 0.5 * lenMinor + slack;
}

void PrefilterRules::validate() const {
  if (!(minAreaSqM > 0 && maxAspect > 0 && minCircumferenceM > 0 && maxCircumferenceM > 0)) {
    throw ValidationError("prefilter rules must be positive");
  }
  if (!(minCircumferenceM < maxCircumferenceM)) {
    throw ValidationError("prefilter: minimum circumference must be below the maximum");
  }
}

// ---------------------------------------------------------------------------
// Marching squares
// ---------------------------------------------------------------------------

namespace {

// Works on the raster padded by one "outside" pixel on every side, so every
// raised region is enclosed by outside cells and every loop closes.
class ContourTracer {
 public:
  explicit ContourTracer(const Raster& r)
      : r_(r), pw_(r.width + 2), ph_(r.height + 2),
        inside_(std::size_t(pw_) * ph_, 0),
        next_(std::size_t(2) * pw_ * ph_, -1) {}

  std::vector<Contour> trace(double level) {
    level_ = level;
    for (int j = 0; j < r_.height; ++j) {
      for (int i = 0; i < r_.width; ++i) {
        const std::size_t s = r_.index(i, j);
        inside_[pad(i + 1, j + 1)] = (!r_.nodata[s] && r_.values[s] > level) ? 1 : 0;
      }
    }

    starts_.clear();
    for (int j = 0; j + 1 < ph_; ++j) {
      for (int i = 0; i + 1 < pw_; ++i) emit_cell(i, j);
    }

    std::vector<Contour> out;
    for (std::int32_t s : starts_) {
      if (next_[s] < 0) continue;  // already consumed by an earlier loop
      Contour c;
      c.level = level;
      std::int32_t e = s;
      do {
        const Vec2 p = crossing(e);
        if (c.vertices.empty() || !(c.vertices.back() == p)) c.vertices.push_back(p);
        const std::int32_t n = next_[e];
        next_[e] = -1;
        e = n;
      } while (e != s && e >= 0);
      while (c.vertices.size() > 1 && c.vertices.front() == c.vertices.back()) c.vertices.pop_back();
      if (c.vertices.size() < 3) continue;
      c.vertices.push_back(c.vertices.front());
      out.push_back(std::move(c));
    }
    for (std::int32_t s : starts_) next_[s] = -1;
    return out;
  }

 private:
  std::size_t pad(int i, int j) const { return std::size_t(j) * pw_ + i; }
  std::int32_t h_edge(int i, int j) const { return std::int32_t(2 * (std::size_t(j) * pw_ + i)); }
  std::int32_t v_edge(int i, int j) const { return std::int32_t(2 * (std::size_t(j) * pw_ + i) + 1); }

  bool valid(int pi, int pj) const {
    if (pi < 1 || pj < 1 || pi > r_.width || pj > r_.height) return false;
    return r_.nodata[r_.index(pi - 1, pj - 1)] == 0;
  }
  double value(int pi, int pj) const { return r_.values[r_.index(pi - 1, pj - 1)]; }

  // Crossing on an edge, always computed from the lower endpoint so both
  // neighboring cells agree bitwise.
  Vec2 crossing(std::int32_t edge) const {
    const std::size_t cell = std::size_t(edge) / 2;
    const int ai = int(cell % pw_);
    const int aj = int(cell / pw_);
    const int bi = (edge & 1) ? ai : ai + 1;
    const int bj = (edge & 1) ? aj + 1 : aj;
    double gi, gj;
    const bool va = valid(ai, aj);
    const bool vb = valid(bi, bj);
    if (va && vb) {
      const double a = value(ai, aj);
      const double b = value(bi, bj);
      const double t = (level_ - a) / (b - a);
      gi = ai + t * (bi - ai);
      gj = aj + t * (bj - aj);
    } else if (va) {
      gi = ai;
      gj = aj;
    } else {
      gi = bi;
      gj = bj;
    }
    return {r_.x_of(gi - 1), r_.y_of(gj - 1)};
  }

  void emit_cell(int i, int j) {
    const bool s0 = inside_[pad(i, j)];
    const bool s1 = inside_[pad(i + 1, j)];
    const bool s2 = inside_[pad(i + 1, j + 1)];
    const bool s3 = inside_[pad(i, j + 1)];
    const int code = s0 | (s1 << 1) | (s2 << 2) | (s3 << 3);
    if (code == 0 || code == 15) return;

    // Edges in counter-clockwise order around the cell; edge k runs from
    // corner k to corner k+1.
    const std::int32_t edges[4] = {h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j)};
    const bool st[4] = {s0, s1, s2, s3};

    int crossings[4];
    bool isStart[4];
    int nc = 0;
    for (int k = 0; k < 4; ++k) {
      if (st[k] != st[(k + 1) % 4]) {
        crossings[nc] = k;
        isStart[nc] = st[k];  // leaving the raised region
        ++nc;
      }
    }

    // A start joins the next crossing when the raised region is connected
    // through the cell, else the previous one. Only saddles can differ.
    bool joinNext = true;
    if (nc == 4) {
      bool centerInside = false;
      if (valid(i, j) && valid(i + 1, j) && valid(i + 1, j + 1) && valid(i, j + 1)) {
        const double avg = 0.25 * (value(i, j) + value(i + 1, j) + value(i + 1, j + 1) + value(i, j + 1));
        centerInside = avg > level_;
      }
      joinNext = centerInside;
    }
    for (int c = 0; c < nc; ++c) {
      if (!isStart[c]) continue;
      const int partner = joinNext ? (c + 1) % nc : (c + nc - 1) % nc;
      const std::int32_t from = edges[crossings[c]];
      next_[from] = edges[crossings[partner]];
      starts_.push_back(from);
    }
  }

  const Raster& r_;
  int pw_, ph_;
  double level_ = 0.0;
  std::vector<std::uint8_t> inside_;
  std::vector<std::int32_t> next_;
  std::vector<std::int32_t> starts_;
};

}  // namespace

std::vector<Contour> extract_contours(const Raster& localDem, double level) {
  if (localDem.width <= 0 || localDem.height <= 0) return {};
  ContourTracer tracer(localDem);
  return tracer.trace(level);
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

std::vector<Contour> reduce_hierarchy(std::vector<Contour> contours) {
  const std::size_t n = contours.size();
  if (n == 0) return contours;

  struct Info {
    BoundingBox box;
    double absArea;
    std::vector<Vec2> ring;
  };
  std::vector<Info> info(n);
  BoundingBox all = bounding_box(contours[0].vertices);
  for (std::size_t k = 0; k < n; ++k) {
    info[k].box = bounding_box(contours[k].vertices);
    info[k].absArea = std::abs(contours[k].area());
    info[k].ring = open_ring(contours[k].vertices);
    all.minX = std::min(all.minX, info[k].box.minX);
    all.minY = std::min(all.minY, info[k].box.minY);
    all.maxX = std::max(all.maxX, info[k].box.maxX);
    all.maxY = std::max(all.maxY, info[k].box.maxY);
  }

  // Bucket grid over bounding boxes: a container's box covers the bucket of
  // the contained contour's test vertex.
  const int g = std::clamp(static_cast<int>(std::sqrt(double(n))), 1, 256);
  const double bw = std::max((all.maxX - all.minX) / g, 1e-9);
  const double bh = std::max((all.maxY - all.minY) / g, 1e-9);
  auto bx = [&](double x) { return std::clamp(static_cast<int>((x - all.minX) / bw), 0, g - 1); };
  auto by = [&](double y) { return std::clamp(static_cast<int>((y - all.minY) / bh), 0, g - 1); };
  std::vector<std::vector<std::uint32_t>> buckets(std::size_t(g) * g);
  for (std::size_t k = 0; k < n; ++k) {
    for (int y = by(info[k].box.minY); y <= by(info[k].box.maxY); ++y) {
      for (int x = bx(info[k].box.minX); x <= bx(info[k].box.maxX); ++x) {
        buckets[std::size_t(y) * g + x].push_back(std::uint32_t(k));
      }
    }
  }

  std::vector<std::unique_ptr<PolygonIndex>> indexCache(n);
  auto inside = [&](std::size_t container, Vec2 p) {
    const auto& ring = info[container].ring;
    if (ring.size() < 64) return point_in_polygon(p, ring);
    if (!indexCache[container]) indexCache[container] = std::make_unique<PolygonIndex>(ring);
    return indexCache[container]->contains(p);
  };

  std::vector<Contour> out;
  for (std::size_t a = 0; a < n; ++a) {
    const Vec2 p = contours[a].test_vertex();
    bool nested = false;
    for (std::uint32_t b : buckets[std::size_t(by(p.y)) * g + bx(p.x)]) {
      if (b == a) continue;
      if (!info[b].box.contains(info[a].box) || !(info[b].absArea > info[a].absArea)) continue;
      if (inside(b, p)) {
        nested = true;
        break;
      }
    }
    if (!nested) {
      contours[a].isOuter = true;
      out.push_back(std::move(contours[a]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimum-area rectangle
// ---------------------------------------------------------------------------

namespace {

Mbb make_mbb(Vec2 origin, Vec2 u, double uMin, double uMax, double vMin, double vMax) {
  const Vec2 v{-u.y, u.x};
  Mbb m;
  m.center = origin + u * (0.5 * (uMin + uMax)) + v * (0.5 * (vMin + vMax));
  const double lu = uMax - uMin;
  const double lv = vMax - vMin;
  Vec2 major = u;
  if (lu >= lv) {
    m.lenMajor = lu;
    m.lenMinor = lv;
  } else {
    m.lenMajor = lv;
    m.lenMinor = lu;
    major = v;
  }
  double a = std::atan2(major.y, major.x);
  if (a < 0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a -= std::numbers::pi;
  m.angle = a;
  return m;
}

}  // namespace

Mbb min_bounding_box(std::span<const Vec2> points, MbbMode mode) {
  const std::vector<Vec2> hull = convex_hull(points);
  if (hull.size() < 3) throw DegenerateGeometryError("min_bounding_box: points are collinear");

  if (mode == MbbMode::AxisAligned) {
    const BoundingBox b = bounding_box(hull);
    return make_mbb({0.0, 0.0}, {1.0, 0.0}, b.minX, b.maxX, b.minY, b.maxY);
  }

  // Rotating calipers: for each hull edge track the farthest point across
  // the edge and the extreme points along it.
  const std::size_t h = hull.size();
  auto at = [&](std::size_t i) { return hull[i % h]; };
  auto dir = [&](std::size_t i) {
    const Vec2 d = at(i + 1) - at(i);
    return d * (1.0 / norm(d));
  };

  std::size_t far = 1, right = 1, left = 0;
  double bestArea = std::numeric_limits<double>::infinity();
  Mbb best;
  for (std::size_t i = 0; i < h; ++i) {
    const Vec2 o = at(i);
    const Vec2 u = dir(i);
    const Vec2 v{-u.y, u.x};
    if (i == 0) {
      // Seed the three pointers by a full scan once.
      for (std::size_t k = 0; k < h; ++k) {
        if (dot(at(k) - o, v) > dot(at(far) - o, v)) far = k;
        if (dot(at(k) - o, u) > dot(at(right) - o, u)) right = k;
        if (dot(at(k) - o, u) < dot(at(left) - o, u)) left = k;
      }
    } else {
      for (std::size_t s = 0; s < h && dot(at(far + 1) - o, v) >= dot(at(far) - o, v); ++s) far = (far + 1) % h;
      for (std::size_t s = 0; s < h && dot(at(right + 1) - o, u) >= dot(at(right) - o, u); ++s) right = (right + 1) % h;
      for (std::size_t s = 0; s < h && dot(at(left + 1) - o, u) <= dot(at(left) - o, u); ++s) left = (left + 1) % h;
    }
    const double uMin = dot(at(left) - o, u);
    const double uMax = dot(at(right) - o, u);
    const double vMax = dot(at(far) - o, v);
    const double area = (uMax - uMin) * vMax;
    if (area < bestArea) {
      bestArea = area;
      best = make_mbb(o, u, uMin, uMax, 0.0, vMax);
    }
  }
  if (!(best.lenMinor > 0)) throw DegenerateGeometryError("min_bounding_box: zero-width hull");
  return best;
}

Mbb min_bounding_box(const Contour& contour, MbbMode mode) {
  return min_bounding_box(std::span<const Vec2>(contour.vertices), mode);
}

bool passes_prefilter(const Mbb& mbb, const PrefilterRules& rules) {
  const double c = mbb.circumference();
  return mbb.area() >= rules.minAreaSqM && mbb.aspect() >= 1.0 / rules.maxAspect &&
         c >= rules.minCircumferenceM && c <= rules.maxCircumferenceM;
}

std::vector<Mbb> prefilter(std::span<const Mbb> mbbs, const PrefilterRules& rules) {
  rules.validate();
  std::vector<Mbb> out;
  for (const Mbb& m : mbbs) {
    if (passes_prefilter(m, rules)) out.push_back(m);
  }
  return out;
}

namespace {

SegmentationResult segment_contours(std::vector<Contour> contours, const PrefilterRules& rules, MbbMode mode) {
  SegmentationResult res;
  res.contoursExtracted = contours.size();
  res.reduced = reduce_hierarchy(std::move(contours));
  for (const Contour& c : res.reduced) {
    Mbb m;
    try {
      m = min_bounding_box(c, mode);
    } catch (const DegenerateGeometryError&) {
      ++res.degenerateSkipped;
      continue;
    }
    if (passes_prefilter(m, rules)) res.segments.push_back({c, m});
  }
  return res;
}

}  // namespace

SegmentationResult segment_at_level(const Raster& localDem, double level, const PrefilterRules& rules,
                                    MbbMode mode) {
  rules.validate();
  return segment_contours(extract_contours(localDem, level), rules, mode);
}

double robust_sigma(const Raster& r) {
  std::vector<double> v;
  v.reserve(r.values.size());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    if (!r.nodata[i]) v.push_back(r.values[i]);
  }
  if (v.empty()) return 0.0;
  auto median = [](std::vector<double>& x) {
    const auto mid = x.begin() + std::ptrdiff_t(x.size() / 2);
    std::nth_element(x.begin(), mid, x.end());
    return *mid;
  };
  const double m = median(v);
  for (double& x : v) x = std::abs(x - m);
  return 1.4826 * median(v);
}

TuneResult tune_delta0(const Raster& localDem, const TuneOptions& options) {
  options.rules.validate();
  const ValueRange range = valid_range(localDem);
  if (!(range.span() > 0)) throw ValidationError("tune_delta0: local DEM has zero value range");

  std::vector<std::size_t> counts(256, 0);
  const int workers = std::max(1, options.threads);
  std::vector<std::unique_ptr<ContourTracer>> tracers(std::size_t(std::min(workers, 256)));
  // Worker w handles levels w, w + workers, ... and owns tracer w.
  detail::parallel_for(tracers.size(), workers, [&](std::size_t w) {
    tracers[w] = std::make_unique<ContourTracer>(localDem);
    for (std::size_t g = w; g < 256; g += tracers.size()) {
      const double level = gray_level_to_meters(range, int(g));
      counts[g] = segment_contours(tracers[w]->trace(level), options.rules, options.mode).segments.size();
    }
    tracers[w].reset();
  });

  TuneResult res;
  for (int g = 0; g < 256; ++g) res.curve.emplace_back(g, counts[g]);

  auto argmax = [&](auto&& admissible) {
    int best = -1;
    for (int g = 0; g < 256; ++g) {
      if (!admissible(g)) continue;
      if (best < 0 || counts[g] > counts[best]) best = g;
    }
    return best;
  };
  res.unconstrainedArgmax = argmax([](int) { return true; });
  res.noiseSigma = robust_sigma(localDem);
  res.floorMeters = options.noiseFloorSigmas * res.noiseSigma;
  const bool floorOn = options.noiseFloorSigmas > 0;
  auto aboveFloor = [&](int g) { return !floorOn || gray_level_to_meters(range, g) > res.floorMeters; };

  int chosen = argmax(aboveFloor);
  if (options.meterRange) {
    const auto [lo, hi] = *options.meterRange;
    const int constrained = argmax([&](int g) {
      const double m = gray_level_to_meters(range, g);
      return aboveFloor(g) && m >= lo && m <= hi;
    });
    if (constrained >= 0) {
      chosen = constrained;
    } else {
      // No admissible level inside the range: take the level closest to it.
      double bestDist = std::numeric_limits<double>::infinity();
      for (int g = 0; g < 256; ++g) {
        const double m = gray_level_to_meters(range, g);
        const double d = m < lo ? lo - m : m - hi;
        if (d < bestDist) {
          bestDist = d;
          chosen = g;
        }
      }
    }
  }
  if (chosen < 0) chosen = 255;
  res.delta0Gray = chosen;
  res.delta0Meters = gray_level_to_meters(range, chosen);
  return res;
}

void write_tune_curve_csv(const TuneResult& tune, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "level,count\n";
  for (const auto& [level, count] : tune.curve) os << level << "," << count << "\n";
}

}  // namespace ruinscan
