#include "ruinscan/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ruinscan/error.hpp"

#include <json.hpp>

namespace ruinscan {

namespace {

bool parse_number(std::string_view tok, double& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

PointCloud parse_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::size_t pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;

    double v[3];
    int fields = 0;
    std::string_view rest(line);
    while (fields < 3) {
      pos = rest.find_first_not_of(" \t\r,");
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos);
      const std::size_t end = std::min(rest.find_first_of(" \t\r,"), rest.size());
      if (!parse_number(rest.substr(0, end), v[fields])) {
        throw ParseError(lineNo, "expected numeric x y z, got '" + line + "'");
      }
      ++fields;
      rest.remove_prefix(end);
    }
    if (fields < 3) throw ParseError(lineNo, "expected at least 3 fields (x y z)");
    cloud.records.push_back({v[0], v[1], v[2]});
  }
  if (cloud.records.empty()) throw ValidationError("point cloud contains no records");

  BoundingBox& b = cloud.bounds;
  b = {cloud.records[0].x, cloud.records[0].y, cloud.records[0].x, cloud.records[0].y};
  for (const PointRecord& r : cloud.records) {
    b.minX = std::min(b.minX, r.x);
    b.minY = std::min(b.minY, r.y);
    b.maxX = std::max(b.maxX, r.x);
    b.maxY = std::max(b.maxY, r.y);
  }
  return cloud;
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open point cloud " + path.string());
  try {
    return parse_xyz(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail() + " in " + path.string());
  }
}

namespace {

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  // The smaller index becomes the root so groups are keyed by first record.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  }
};

struct CellKey {
  long long cx, cy;
  bool operator==(const CellKey&) const = default;
};
struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    return std::hash<long long>()(k.cx * 0x9E3779B97F4A7C15LL ^ k.cy);
  }
};

}  // namespace

std::vector<GroundPoint> reduce_to_ground(const PointCloud& cloud, double eps_xy) {
  if (cloud.records.empty()) throw ValidationError("reduce_to_ground: empty point cloud");
  if (!(eps_xy > 0)) throw ValidationError("reduce_to_ground: eps_xy must be positive");

  const auto& recs = cloud.records;
  const std::size_t n = recs.size();
  // Hash records into eps-sized cells; a partner within eps in both axes can
  // only sit in one of the 3x3 neighboring cells.
  const double ox = cloud.bounds.minX;
  const double oy = cloud.bounds.minY;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells;
  cells.reserve(n);
  std::vector<CellKey> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = {static_cast<long long>(std::floor((recs[i].x - ox) / eps_xy)),
               static_cast<long long>(std::floor((recs[i].y - oy) / eps_xy))};
    cells[keys[i]].push_back(i);
  }

  DisjointSet groups(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = cells.find({keys[i].cx + dx, keys[i].cy + dy});
        if (it == cells.end()) continue;
        for (std::size_t j : it->second) {
          if (j <= i) continue;
          if (std::abs(recs[j].x - recs[i].x) <= eps_xy && std::abs(recs[j].y - recs[i].y) <= eps_xy) {
            groups.unite(i, j);
          }
        }
      }
    }
  }

  // Lowest return per group; ties keep the earliest record.
  std::vector<std::size_t> lowest(n, SIZE_MAX);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = groups.find(i);
    if (lowest[root] == SIZE_MAX) {
      lowest[root] = i;
      order.push_back(root);
    } else if (recs[i].z < recs[lowest[root]].z) {
      lowest[root] = i;
    }
  }

  std::vector<GroundPoint> out;
  out.reserve(order.size());
  for (std::size_t root : order) {
    const PointRecord& r = recs[lowest[root]];
    out.push_back({r.x, r.y, r.z});
  }
  return out;
}

AnnotationSet parse_annotations(const std::string& geojson) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(geojson);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("annotations: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    throw ValidationError("annotations: expected a GeoJSON FeatureCollection");
  }

  AnnotationSet set;
  std::size_t index = 0;
  for (const auto& feature : doc["features"]) {
    std::string id = "feature-" + std::to_string(index++);
    if (feature.contains("properties") && feature["properties"].is_object() &&
        feature["properties"].contains("id")) {
      const auto& pid = feature["properties"]["id"];
      id = pid.is_string() ? pid.get<std::string>() : pid.dump();
    } else if (feature.contains("id")) {
      id = feature["id"].is_string() ? feature["id"].get<std::string>() : feature["id"].dump();
    }

    if (!feature.contains("geometry") || !feature["geometry"].is_object() ||
        feature["geometry"].value("type", "") != "Polygon") {
      throw ValidationError("annotations: feature " + id + " is not a Polygon");
    }
    const auto& rings = feature["geometry"]["coordinates"];
    if (!rings.is_array() || rings.empty()) {
      throw ValidationError("annotations: feature " + id + " has no coordinates");
    }
    if (rings.size() > 1) {
      set.warnings.push_back("feature " + id + ": " + std::to_string(rings.size() - 1) +
                             " interior ring(s) dropped; only the outer ring is used");
    }

    std::vector<Vec2> raw;
    for (const auto& c : rings[0]) {
      if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
        throw ValidationError("annotations: feature " + id + " has a malformed coordinate");
      }
      raw.push_back({c[0].get<double>(), c[1].get<double>()});
    }
    std::vector<Vec2> ring = open_ring(raw);
    if (ring.size() < 3) throw ValidationError("annotations: feature " + id + " has fewer than 3 vertices");
    if (!is_simple_ring(ring)) throw ValidationError("annotations: feature " + id + " is self-intersecting");

    double area = signed_area(ring);
    if (area == 0.0) throw ValidationError("annotations: feature " + id + " has zero area");
    if (area < 0) {
      std::reverse(ring.begin(), ring.end());
      area = -area;
    }
    ring.push_back(ring.front());
    set.polygons.push_back({id, std::move(ring), area});
  }
  return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_annotations(ss.str());
}

}  // namespace ruinscan
