#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ruinscan/ingest.hpp"

namespace ruinscan {

/// Regular north-up grid. Pixel (col, row) is centered at
/// (originX + col * resolution, originY + row * resolution); row 0 is the
/// southern edge.
struct Raster {
  double originX = 0.0;
  double originY = 0.0;
  double resolution = 1.0;
  int width = 0;
  int height = 0;
  std::vector<double> values;        // row-major
  std::vector<std::uint8_t> nodata;  // 1 where the pixel carries no value

  Raster() = default;
  Raster(int w, int h, double res, double ox = 0.0, double oy = 0.0, double fill = 0.0)
      : originX(ox), originY(oy), resolution(res), width(w), height(h),
        values(static_cast<std::size_t>(w) * h, fill), nodata(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * width + col; }
  double& at(int col, int row) { return values[index(col, row)]; }
  double at(int col, int row) const { return values[index(col, row)]; }
  bool valid(int col, int row) const { return nodata[index(col, row)] == 0; }
  double x_of(double col) const { return originX + col * resolution; }
  double y_of(double row) const { return originY + row * resolution; }
  double col_of(double x) const { return (x - originX) / resolution; }
  double row_of(double y) const { return (y - originY) / resolution; }
  std::size_t valid_count() const;
};

struct ValueRange {
  double min = 0.0;
  double max = 0.0;
  double span() const { return max - min; }
};

/// Min and max over valid pixels; throws if there are none.
ValueRange valid_range(const Raster& r);

enum class Rolloff { Ideal, Gaussian };

struct LocalizeParams {
  double lambdaMeters = 3.0;
  Rolloff rolloff = Rolloff::Gaussian;
};

/// Nearest-neighbor gridding. Ties go to the lowest point index; cells whose
/// nearest point is farther than maxSearch are nodata.
Raster grid_nearest(std::span<const GroundPoint> points, double resolution = 0.3,
                    double maxSearch = 3.0, int threads = 1);

/// Spectral transfer of the high-pass at radial wavenumber k (rad/m).
double localize_transfer(double k, const LocalizeParams& params);

/// Removes wavelengths longer than lambda: X - lowpass(X).
Raster localize(const Raster& dem, const LocalizeParams& params);

/// Affine map of valid pixels onto integers 0..255 (round half up).
Raster to_grayscale(const Raster& dem);

/// Meter value corresponding to grayscale level g of to_grayscale(dem).
double gray_level_to_meters(const ValueRange& range, int gray);

// Persistence: <base>.f32 (little-endian float32, row-major) + <base>.json.
inline constexpr double kNodataSentinel = -9999.0;
void write_raster(const Raster& r, const std::filesystem::path& base);
Raster read_raster(const std::filesystem::path& base);

/// Binary PGM (P5), north-up, nodata written as 0.
void write_pgm(const Raster& gray, const std::filesystem::path& path);

}  // namespace ruinscan
