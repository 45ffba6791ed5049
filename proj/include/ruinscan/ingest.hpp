#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "ruinscan/geometry.hpp"

namespace ruinscan {

/// One LiDAR return. Several records may share the same (x, y).
struct PointRecord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct PointCloud {
  std::vector<PointRecord> records;
  BoundingBox bounds;
};

/// Lowest return at one location.
struct GroundPoint {
  double x = 0.0;
  double y = 0.0;
  double z0 = 0.0;
};

struct AnnotationPolygon {
  std::string id;
  std::vector<Vec2> ring;  // counter-clockwise, closed (front == back)
  double areaSqM = 0.0;
};

PointCloud parse_xyz(std::istream& in);
PointCloud load_xyz(const std::filesystem::path& path);

/// Groups records whose x and y each differ by at most eps_xy (transitively)
/// and keeps the lowest return of each group. Groups are emitted in order of
/// their first record. No outlier filtering is applied.
std::vector<GroundPoint> reduce_to_ground(const PointCloud& cloud, double eps_xy = 1e-6);

struct AnnotationSet {
  std::vector<AnnotationPolygon> polygons;
  std::vector<std::string> warnings;
};

/// Parses a GeoJSON FeatureCollection of Polygon features. Only the outer ring
/// is used; interior rings are dropped with a warning.
AnnotationSet parse_annotations(const std::string& geojson);
AnnotationSet load_annotations(const std::filesystem::path& path);

}  // namespace ruinscan
