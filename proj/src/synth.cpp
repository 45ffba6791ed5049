#include "ruinscan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ruinscan/error.hpp"
#include "ruinscan/rng.hpp"

namespace ruinscan {

void SiteSpec::validate() const {
  if (!(extentX > 0 && extentY > 0)) throw ValidationError("synth: extent must be positive");
  if (!(pointDensity > 0)) throw ValidationError("synth: point density must be positive");
  if (houses < 0 || shrubs < 0) throw ValidationError("synth: counts must be non-negative");
  if (!(sideMin > 0 && sideMax >= sideMin)) throw ValidationError("synth: invalid side range");
  if (sideMax * sideMax < minFootprintSqM) {
    throw ValidationError("synth: side range cannot reach the minimum footprint");
  }
  if (!(wallHeightMin > 0 && wallHeightMax >= wallHeightMin)) throw ValidationError("synth: invalid wall height range");
  if (!(wallThickness > 0 && 2 * wallThickness < sideMin)) throw ValidationError("synth: invalid wall thickness");
  if (!(entranceProb >= 0 && entranceProb <= 1)) throw ValidationError("synth: entrance probability outside [0, 1]");
  if (!(entranceWidth >= 0 && entranceWidth < sideMin - 2 * wallThickness)) {
    throw ValidationError("synth: entrance wider than a wall");
  }
  if (!(houseSpacing >= 0)) throw ValidationError("synth: negative house spacing");
  for (const auto& w : terrain) {
    if (!(w.wavelengthM >= 4 * lambdaM)) {
      throw ValidationError("synth: terrain wavelength " + std::to_string(w.wavelengthM) + " m is below 4 * lambda");
    }
  }
  if (!(vegetationSpikeRate >= 0)) throw ValidationError("synth: negative spike rate");
  if (!(spikeHeightMin >= 0 && spikeHeightMax >= spikeHeightMin)) throw ValidationError("synth: invalid spike heights");
  if (!(shrubRadiusMin > 0 && shrubRadiusMax >= shrubRadiusMin)) throw ValidationError("synth: invalid shrub radii");
  if (!(shrubHeightMin > 0 && shrubHeightMax >= shrubHeightMin)) throw ValidationError("synth: invalid shrub heights");
  if (!(shrubReturnDensity > 0)) throw ValidationError("synth: shrub return density must be positive");
  if (!(positionJitter >= 0 && positionJitter <= 1)) throw ValidationError("synth: jitter must lie in [0, 1]");
  if (!(noiseSigmaM >= 0)) throw ValidationError("synth: negative noise sigma");
}

std::vector<Vec2> PlantedHouse::footprint() const {
  const Vec2 u{std::cos(angle), std::sin(angle)};
  const Vec2 v{-u.y, u.x};
  const double a = width / 2, b = depth / 2;
  std::vector<Vec2> ring{center - u * a - v * b, center + u * a - v * b, center + u * a + v * b,
                         center - u * a + v * b};
  ring.push_back(ring.front());
  return ring;
}

double terrain_height(const SiteSpec& spec, double x, double y) {
  double z = 0.0;
  for (const auto& w : spec.terrain) {
    const double k = 2 * std::numbers::pi / w.wavelengthM;
    z += w.amplitudeM * std::sin(k * (x * std::cos(w.directionRad) + y * std::sin(w.directionRad)) + w.phaseRad);
  }
  return z;
}

double SyntheticSite::terrain_at(const SiteSpec& spec, double x, double y) const { return terrain_height(spec, x, y); }

namespace {

constexpr int kMaxPlacementAttempts = 1000;

// Coordinates are kept on the 0.1 mm grid the text format carries, so the
// in-memory cloud and the written file agree exactly.
double quantize(double v) { return std::round(v * 1e4) / 1e4; }

struct Disc {
  Vec2 center;
  double radius;
};

bool clear_of(const std::vector<Disc>& placed, Vec2 c, double r, double gap) {
  return std::all_of(placed.begin(), placed.end(),
                     [&](const Disc& d) { return norm(d.center - c) >= d.radius + r + gap; });
}

// Houses and shrubs hashed into coarse cells for the per-point lookup.
class FeatureGrid {
 public:
  FeatureGrid(double extentX, double extentY, double cell) : cell_(cell) {
    nx_ = std::max(1, int(std::ceil(extentX / cell)));
    ny_ = std::max(1, int(std::ceil(extentY / cell)));
    cells_.resize(std::size_t(nx_) * ny_);
  }

  void insert(std::size_t id, Vec2 c, double r) {
    const int i0 = clampx(int(std::floor((c.x - r) / cell_))), i1 = clampx(int(std::floor((c.x + r) / cell_)));
    const int j0 = clampy(int(std::floor((c.y - r) / cell_))), j1 = clampy(int(std::floor((c.y + r) / cell_)));
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) cells_[std::size_t(j) * nx_ + i].push_back(id);
    }
  }

  const std::vector<std::size_t>& at(double x, double y) const {
    return cells_[std::size_t(clampy(int(std::floor(y / cell_)))) * nx_ + clampx(int(std::floor(x / cell_)))];
  }

 private:
  int clampx(int i) const { return std::clamp(i, 0, nx_ - 1); }
  int clampy(int j) const { return std::clamp(j, 0, ny_ - 1); }
  double cell_;
  int nx_, ny_;
  std::vector<std::vector<std::size_t>> cells_;
};

// Wall height above terrain at (x, y), 0 off the walls. Walls are flat-topped
// bands of the given thickness just inside the outer footprint.
double wall_height(const PlantedHouse& h, int entranceSide, double entranceWidth, double x, double y) {
  const double dx = x - h.center.x, dy = y - h.center.y;
  const double c = std::cos(h.angle), s = std::sin(h.angle);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  const double a = h.width / 2, b = h.depth / 2, t = h.wallThickness;
  if (std::abs(u) > a || std::abs(v) > b) return 0.0;
  if (std::abs(u) <= a - t && std::abs(v) <= b - t) return 0.0;
  if (h.entrance) {
    const double half = entranceWidth / 2;
    switch (entranceSide) {
      case 0: if (v <= -b + t && std::abs(u) <= half) return 0.0; break;
      case 1: if (u >= a - t && std::abs(v) <= half) return 0.0; break;
      case 2: if (v >= b - t && std::abs(u) <= half) return 0.0; break;
      default: if (u <= -a + t && std::abs(v) <= half) return 0.0; break;
    }
  }
  return h.wallHeight;
}

}  // namespace

SyntheticSite generate_site(const SiteSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticSite site;

  // Houses by rejection sampling; each keeps a clear ring of houseSpacing.
  std::vector<Disc> placed;
  std::vector<int> entranceSide;
  for (int k = 0; k < spec.houses; ++k) {
    PlantedHouse h;
    char id[32];
    std::snprintf(id, sizeof id, "house-%03d", k + 1);
    h.id = id;
    do {
      h.width = rng.uniform(spec.sideMin, spec.sideMax);
      h.depth = rng.uniform(spec.sideMin, spec.sideMax);
    } while (h.width * h.depth < spec.minFootprintSqM);
    h.angle = rng.uniform(0.0, std::numbers::pi);
    h.wallHeight = rng.uniform(spec.wallHeightMin, spec.wallHeightMax);
    h.wallThickness = spec.wallThickness;
    h.entrance = rng.uniform() < spec.entranceProb;
    const int side = int(rng.below(4));
    const double r = 0.5 * std::hypot(h.width, h.depth);
    const double margin = r + spec.houseSpacing;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      if (2 * margin >= spec.extentX || 2 * margin >= spec.extentY) break;
      const Vec2 c{rng.uniform(margin, spec.extentX - margin), rng.uniform(margin, spec.extentY - margin)};
      if (clear_of(placed, c, r, spec.houseSpacing)) {
        h.center = c;
        ok = true;
      }
    }
    if (!ok) {
      throw ValidationError("synth: could not place house " + h.id + " within " +
                            std::to_string(kMaxPlacementAttempts) + " attempts; extent too small");
    }
    placed.push_back({h.center, r});
    entranceSide.push_back(side);
    site.houses.push_back(h);
  }

  for (int k = 0; k < spec.shrubs; ++k) {
    PlantedShrub s;
    s.radius = rng.uniform(spec.shrubRadiusMin, spec.shrubRadiusMax);
    s.height = rng.uniform(spec.shrubHeightMin, spec.shrubHeightMax);
    const double margin = s.radius + spec.houseSpacing;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      if (2 * margin >= spec.extentX || 2 * margin >= spec.extentY) break;
      const Vec2 c{rng.uniform(margin, spec.extentX - margin), rng.uniform(margin, spec.extentY - margin)};
      if (clear_of(placed, c, s.radius, spec.houseSpacing)) {
        s.center = c;
        ok = true;
      }
    }
    if (!ok) throw ValidationError("synth: could not place shrub " + std::to_string(k + 1) + "; extent too small");
    placed.push_back({s.center, s.radius});
    site.shrubs.push_back(s);
  }

  FeatureGrid grid(spec.extentX, spec.extentY, 10.0);
  for (std::size_t k = 0; k < site.houses.size(); ++k) {
    grid.insert(k, site.houses[k].center, 0.5 * std::hypot(site.houses[k].width, site.houses[k].depth));
  }
  const std::size_t shrubBase = site.houses.size();
  for (std::size_t k = 0; k < site.shrubs.size(); ++k) {
    grid.insert(shrubBase + k, site.shrubs[k].center, site.shrubs[k].radius);
  }

  // Ground returns on a regular scan lattice, optionally jittered within each cell.
  const double spacing = 1.0 / std::sqrt(spec.pointDensity);
  const int nx = std::max(1, int(std::floor(spec.extentX / spacing)));
  const int ny = std::max(1, int(std::floor(spec.extentY / spacing)));
  const double spikeProb = std::min(1.0, spec.vegetationSpikeRate / spec.pointDensity);
  auto& records = site.cloud.records;
  records.reserve(std::size_t(nx) * ny + std::size_t(double(nx) * ny * spikeProb * 1.2));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = quantize((i + 0.5 + spec.positionJitter * (rng.uniform() - 0.5)) * spacing);
      const double y = quantize((j + 0.5 + spec.positionJitter * (rng.uniform() - 0.5)) * spacing);
      const double noise = spec.noiseSigmaM * rng.normal();
      const double spikeDraw = rng.uniform();
      const double spikeHeight = rng.uniform(spec.spikeHeightMin, spec.spikeHeightMax);

      double raise = 0.0;
      bool hidden = false;
      for (std::size_t id : grid.at(x, y)) {
        if (id < shrubBase) {
          raise = std::max(raise, wall_height(site.houses[id], entranceSide[id], spec.entranceWidth, x, y));
        } else if (norm(Vec2{x, y} - site.shrubs[id - shrubBase].center) <= site.shrubs[id - shrubBase].radius) {
          hidden = true;
        }
      }
      if (hidden) continue;  // the canopy intercepts every return here
      const double ground = terrain_height(spec, x, y) + raise;
      records.push_back({x, y, quantize(ground + noise)});
      if (spikeDraw < spikeProb) {
        records.push_back({x, y, quantize(ground + spikeHeight)});
        ++site.spikeReturns;
      }
    }
  }

  // Shrub canopy: a dome of returns with no ground hit underneath.
  for (const auto& s : site.shrubs) {
    const double area = std::numbers::pi * s.radius * s.radius;
    const auto n = std::size_t(std::llround(area * spec.shrubReturnDensity));
    for (std::size_t k = 0; k < n; ++k) {
      const double rr = s.radius * std::sqrt(rng.uniform());
      const double th = rng.uniform(0.0, 2 * std::numbers::pi);
      const double x = quantize(s.center.x + rr * std::cos(th));
      const double y = quantize(s.center.y + rr * std::sin(th));
      const double dome = s.height * std::sqrt(std::max(0.0, 1.0 - (rr * rr) / (s.radius * s.radius)));
      records.push_back({x, y, quantize(terrain_height(spec, x, y) + dome + spec.noiseSigmaM * rng.normal())});
    }
  }

  if (records.empty()) throw ValidationError("synth: site produced no returns");
  auto& b = site.cloud.bounds;
  b = {records[0].x, records[0].y, records[0].x, records[0].y};
  for (const auto& r : records) {
    b.minX = std::min(b.minX, r.x);
    b.minY = std::min(b.minY, r.y);
    b.maxX = std::max(b.maxX, r.x);
    b.maxY = std::max(b.maxY, r.y);
  }
  return site;
}

nlohmann::json SyntheticSite::manifest(const SiteSpec& spec) const {
  nlohmann::json j;
  j["extent"] = {spec.extentX, spec.extentY};
  j["seed"] = spec.seed;
  j["returns"] = cloud.records.size();
  j["spike_returns"] = spikeReturns;
  j["houses"] = nlohmann::json::array();
  for (const auto& h : houses) {
    j["houses"].push_back({{"id", h.id},
                           {"center", {h.center.x, h.center.y}},
                           {"width", h.width},
                           {"depth", h.depth},
                           {"angle", h.angle},
                           {"wall_height", h.wallHeight},
                           {"wall_thickness", h.wallThickness},
                           {"entrance", h.entrance},
                           {"area", h.area()}});
  }
  j["shrubs"] = nlohmann::json::array();
  for (const auto& s : shrubs) {
    j["shrubs"].push_back({{"center", {s.center.x, s.center.y}}, {"radius", s.radius}, {"height", s.height}});
  }
  return j;
}

void write_site(const SyntheticSite& site, const SiteSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::FILE* f = std::fopen((dir / "site.xyz").c_str(), "wb");
    if (!f) throw IoError("cannot write " + (dir / "site.xyz").string());
    std::fputs("# x y z\n", f);
    for (const auto& r : site.cloud.records) std::fprintf(f, "%.4f %.4f %.4f\n", r.x, r.y, r.z);
    if (std::fclose(f) != 0) throw IoError("write failed for " + (dir / "site.xyz").string());
  }
  {
    nlohmann::json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = nlohmann::json::array();
    for (const auto& h : site.houses) {
      nlohmann::json ring = nlohmann::json::array();
      for (const Vec2& p : h.footprint()) ring.push_back({p.x, p.y});
      fc["features"].push_back({{"type", "Feature"},
                                {"properties", {{"id", h.id}}},
                                {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
    }
    std::ofstream os(dir / "annotations.geojson");
    if (!os) throw IoError("cannot write " + (dir / "annotations.geojson").string());
    os << fc.dump(1) << "\n";
  }
  {
    std::ofstream os(dir / "truth.json");
    if (!os) throw IoError("cannot write " + (dir / "truth.json").string());
    os << site.manifest(spec).dump(2) << "\n";
  }
}

}  // namespace ruinscan
