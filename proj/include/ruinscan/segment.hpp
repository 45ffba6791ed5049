#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ruinscan/geometry.hpp"
#include "ruinscan/raster.hpp"

namespace ruinscan {

/// Closed level-set polyline in world coordinates (front == back).
struct Contour {
  std::vector<Vec2> vertices;
  double level = 0.0;
  bool isOuter = false;

  /// Signed area; positive for counter-clockwise loops around raised regions.
  double area() const;
  Vec2 test_vertex() const { return vertices.front(); }
};

/// Minimum-area enclosing rectangle.
struct Mbb {
  Vec2 center;
  double lenMajor = 0.0;
  double lenMinor = 0.0;
  double angle = 0.0;  // direction of the major axis, radians in [0, pi)

  double area() const { return lenMajor * lenMinor; }
  double circumference() const { return 2.0 * (lenMajor + lenMinor); }
  double aspect() const { return lenMinor / lenMajor; }

  Vec2 major_axis() const;
  Vec2 minor_axis() const;
  /// Corners counter-clockwise, starting at (-major, -minor).
  std::vector<Vec2> corners() const;
  /// Copy with each side pushed outward by `margin`.
  Mbb widened(double margin) const;
  bool contains(Vec2 p, double slack = 1e-6) const;
};

enum class MbbMode { MinimumArea, AxisAligned };

struct PrefilterRules {
  double minAreaSqM = 3.0;
  double maxAspect = 10.0;  // reject anything more elongated than 1:maxAspect
  double minCircumferenceM = 10.0;
  double maxCircumferenceM = 200.0;

  void validate() const;
};

/// Marching squares at `level` with the cell-center average rule on saddles.
/// Pixels are "inside" when value > level. Nodata pixels and the area beyond
/// the raster edge count as outside; crossings towards them are placed on the
/// valid pixel, which closes border-touching regions along the border.
/// Loops around raised regions are counter-clockwise, holes clockwise.
std::vector<Contour> extract_contours(const Raster& localDem, double level);

/// Keeps contours not strictly inside any other contour and marks them outer.
std::vector<Contour> reduce_hierarchy(std::vector<Contour> contours);

Mbb min_bounding_box(std::span<const Vec2> points, MbbMode mode = MbbMode::MinimumArea);
Mbb min_bounding_box(const Contour& contour, MbbMode mode = MbbMode::MinimumArea);

bool passes_prefilter(const Mbb& mbb, const PrefilterRules& rules);
std::vector<Mbb> prefilter(std::span<const Mbb> mbbs, const PrefilterRules& rules);

/// A surviving contour with its bounding box.
struct Segment {
  Contour contour;
  Mbb mbb;
};

/// Extract, reduce, box and prefilter at one level (process P1).
/// Degenerate contours are skipped. Also returns the reduced contour set.
struct SegmentationResult {
  std::vector<Segment> segments;
  std::vector<Contour> reduced;
  std::size_t contoursExtracted = 0;
  std::size_t degenerateSkipped = 0;
};
SegmentationResult segment_at_level(const Raster& localDem, double level, const PrefilterRules& rules,
                                    MbbMode mode = MbbMode::MinimumArea);

struct TuneOptions {
  PrefilterRules rules;
  MbbMode mode = MbbMode::MinimumArea;
  /// Restricts the argmax to levels whose meter value lies in this range;
  /// when no level falls inside, the level nearest the range is used.
  /// The full 256-level curve is always evaluated.
  std::optional<std::pair<double, double>> meterRange;
  /// Levels at or below noiseFloorSigmas * (robust sigma of the local DEM)
  /// are excluded from the argmax; 0 disables the floor.
  double noiseFloorSigmas = 3.0;
  int threads = 1;
};

struct TuneResult {
  int delta0Gray = 0;
  double delta0Meters = 0.0;
  std::vector<std::pair<int, std::size_t>> curve;  // (gray level, count), levels 0..255
  int unconstrainedArgmax = 0;
  double noiseSigma = 0.0;  // 1.4826 * median absolute deviation of valid pixels
  double floorMeters = 0.0;
};

/// Robust spread of the valid pixels: 1.4826 * MAD.
double robust_sigma(const Raster& r);

TuneResult tune_delta0(const Raster& localDem, const TuneOptions& options = {});

void write_tune_curve_csv(const TuneResult& tune, const std::filesystem::path& path);

}  // namespace ruinscan
