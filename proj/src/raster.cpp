#include "ruinscan/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "parallel.hpp"
#include "ruinscan/error.hpp"

#include <json.hpp>

namespace ruinscan {

std::size_t Raster::valid_count() const {
  return static_cast<std::size_t>(std::count(nodata.begin(), nodata.end(), std::uint8_t{0}));
}

ValueRange valid_range(const Raster& r) {
  ValueRange out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    if (r.nodata[i]) continue;
    out.min = std::min(out.min, r.values[i]);
    out.max = std::max(out.max, r.values[i]);
  }
  if (out.min > out.max) throw ValidationError("raster has no valid pixels");
  return out;
}

Raster grid_nearest(std::span<const GroundPoint> points, double resolution, double maxSearch, int threads) {
  if (points.empty()) throw ValidationError("grid_nearest: no ground points");
  if (!(resolution > 0)) throw ValidationError("grid_nearest: resolution must be positive");
  if (!(maxSearch > 0)) throw ValidationError("grid_nearest: maxSearch must be positive");

  double minX = points[0].x, maxX = minX, minY = points[0].y, maxY = minY;
  for (const GroundPoint& p : points) {
    minX = std::min(minX, p.x);
    maxX = std::max(maxX, p.x);
    minY = std::min(minY, p.y);
    maxY = std::max(maxY, p.y);
  }
  // Cell centers start on the minimum coordinate; one extra cell whenever the
  // span is not a whole number of cells, so the maximum is always covered.
  const int width = static_cast<int>(std::ceil((maxX - minX) / resolution - 1e-9)) + 1;
  const int height = static_cast<int>(std::ceil((maxY - minY) / resolution - 1e-9)) + 1;
  Raster out(width, height, resolution, minX, minY);

  // Uniform bucket index over the points.
  const double bucket = 2.0 * resolution;
  const int bw = static_cast<int>(std::floor((maxX - minX) / bucket)) + 1;
  const int bh = static_cast<int>(std::floor((maxY - minY) / bucket)) + 1;
  std::vector<std::uint32_t> start(static_cast<std::size_t>(bw) * bh + 1, 0);
  std::vector<std::uint32_t> bucketOf(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int bx = std::min(bw - 1, static_cast<int>((points[i].x - minX) / bucket));
    const int by = std::min(bh - 1, static_cast<int>((points[i].y - minY) / bucket));
    bucketOf[i] = static_cast<std::uint32_t>(by * bw + bx);
    ++start[bucketOf[i] + 1];
  }
  for (std::size_t b = 1; b < start.size(); ++b) start[b] += start[b - 1];
  std::vector<std::uint32_t> members(points.size());
  {
    std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
    // Ascending point order inside each bucket.
    for (std::size_t i = 0; i < points.size(); ++i) members[fill[bucketOf[i]]++] = static_cast<std::uint32_t>(i);
  }

  const double maxSearch2 = maxSearch * maxSearch;
  const int maxRing = static_cast<int>(std::ceil(maxSearch / bucket)) + 1;

  detail::parallel_for(static_cast<std::size_t>(height), threads, [&](std::size_t rowIdx) {
    const int row = static_cast<int>(rowIdx);
    const double cy = out.y_of(row);
    const int by = std::min(bh - 1, static_cast<int>((cy - minY) / bucket));
    for (int col = 0; col < width; ++col) {
      const double cx = out.x_of(col);
      const int bx = std::min(bw - 1, static_cast<int>((cx - minX) / bucket));
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t bestIdx = UINT32_MAX;
      for (int ring = 0; ring <= maxRing; ++ring) {
        // Everything beyond this ring is at least ring * bucket away.
        const double reach = (ring - 1) * bucket;
        if (ring > 0 && reach > 0 && best < reach * reach) break;
        for (int dy = -ring; dy <= ring; ++dy) {
          const int y = by + dy;
          if (y < 0 || y >= bh) continue;
          const bool edgeRow = (dy == -ring || dy == ring);
          for (int dx = -ring; dx <= ring; dx += edgeRow ? 1 : 2 * ring) {
            const int x = bx + dx;
            if (x >= 0 && x < bw) {
              const std::size_t b = static_cast<std::size_t>(y) * bw + x;
              for (std::uint32_t k = start[b]; k < start[b + 1]; ++k) {
                const std::uint32_t idx = members[k];
                const double ddx = points[idx].x - cx;
                const double ddy = points[idx].y - cy;
                const double d2 = ddx * ddx + ddy * ddy;
                if (d2 < best || (d2 == best && idx < bestIdx)) {
                  best = d2;
                  bestIdx = idx;
                }
              }
            }
            if (ring == 0) break;
          }
        }
      }
      const std::size_t at = out.index(col, row);
      if (bestIdx == UINT32_MAX || best > maxSearch2) {
        out.nodata[at] = 1;
        out.values[at] = 0.0;
      } else {
        out.values[at] = points[bestIdx].z0;
      }
    }
  });
  return out;
}

double localize_transfer(double k, const LocalizeParams& params) {
  const double kLambda = 2.0 * std::numbers::pi / params.lambdaMeters;
  if (params.rolloff == Rolloff::Ideal) return k >= kLambda ? 1.0 : 0.0;
  const double r = k / kLambda;
  return 1.0 - std::exp(-r * r);
}

namespace {

// The FFTW planner is not re-entrant.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  void* ptr;
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

}  // namespace

Raster localize(const Raster& dem, const LocalizeParams& params) {
  if (!(params.lambdaMeters > 2.0 * dem.resolution)) {
    throw ValidationError("localize: lambda must exceed twice the raster resolution");
  }
  if (dem.width < 4 || dem.height < 4 || dem.valid_count() < 16) {
    throw ValidationError("localize: need at least 4x4 valid pixels");
  }

  const int w = dem.width;
  const int h = dem.height;
  double validMean = 0.0;
  std::size_t nValid = 0;
  for (std::size_t i = 0; i < dem.values.size(); ++i) {
    if (!dem.nodata[i]) {
      validMean += dem.values[i];
      ++nValid;
    }
  }
  validMean /= double(nValid);

  // Mirror extension to (2h, 2w): the periodic continuation is then
  // continuous across the raster edges.
  const int eh = 2 * h;
  const int ew = 2 * w;
  const int cw = ew / 2 + 1;
  FftwBuffer realBuf(sizeof(double) * std::size_t(eh) * ew);
  FftwBuffer specBuf(sizeof(fftw_complex) * std::size_t(eh) * cw);
  auto* real = static_cast<double*>(realBuf.ptr);
  auto* spec = static_cast<fftw_complex*>(specBuf.ptr);

  FftwPlan forward, backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward.plan = fftw_plan_dft_r2c_2d(eh, ew, real, spec, FFTW_ESTIMATE);
    backward.plan = fftw_plan_dft_c2r_2d(eh, ew, spec, real, FFTW_ESTIMATE);
  }

  for (int r = 0; r < eh; ++r) {
    const int sr = r < h ? r : eh - 1 - r;
    for (int c = 0; c < ew; ++c) {
      const int sc = c < w ? c : ew - 1 - c;
      const std::size_t src = dem.index(sc, sr);
      real[std::size_t(r) * ew + c] = dem.nodata[src] ? validMean : dem.values[src];
    }
  }

  fftw_execute(forward.plan);

  const double dky = 2.0 * std::numbers::pi / (eh * dem.resolution);
  const double dkx = 2.0 * std::numbers::pi / (ew * dem.resolution);
  const double scale = 1.0 / (double(eh) * ew);
  for (int r = 0; r < eh; ++r) {
    const int fy = r <= eh / 2 ? r : r - eh;
    const double ky = fy * dky;
    for (int c = 0; c < cw; ++c) {
      const double kx = c * dkx;
      const double gain = localize_transfer(std::hypot(kx, ky), params) * scale;
      fftw_complex& v = spec[std::size_t(r) * cw + c];
      v[0] *= gain;
      v[1] *= gain;
    }
  }

  fftw_execute(backward.plan);

  Raster out = dem;
  double residual = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = out.index(c, r);
      out.values[i] = real[std::size_t(r) * ew + c];
      if (!out.nodata[i]) residual += out.values[i];
    }
  }
  // Only non-zero when nodata pixels were filled.
  residual /= double(nValid);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = out.nodata[i] ? 0.0 : out.values[i] - residual;
  }
  return out;
}

Raster to_grayscale(const Raster& dem) {
  const ValueRange range = valid_range(dem);
  if (!(range.span() > 0)) throw ValidationError("to_grayscale: raster has zero value range");
  Raster out = dem;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.nodata[i]) {
      out.values[i] = 0.0;
      continue;
    }
    const double g = std::floor((dem.values[i] - range.min) / range.span() * 255.0 + 0.5);
    out.values[i] = std::clamp(g, 0.0, 255.0);
  }
  return out;
}

double gray_level_to_meters(const ValueRange& range, int gray) {
  return range.min + range.span() * (double(gray) / 255.0);
}

namespace {

void put_f32_le(std::ostream& os, float f) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  os.write(reinterpret_cast<const char*>(&bits), 4);
}

float get_f32_le(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* ext) {
  return std::filesystem::path(base.string() + ext);
}

}  // namespace

void write_raster(const Raster& r, const std::filesystem::path& base) {
  std::ofstream bin(with_suffix(base, ".f32"), std::ios::binary);
  if (!bin) throw IoError("cannot write " + with_suffix(base, ".f32").string());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    put_f32_le(bin, r.nodata[i] ? float(kNodataSentinel) : float(r.values[i]));
  }
  nlohmann::ordered_json hdr;
  hdr["originX"] = r.originX;
  hdr["originY"] = r.originY;
  hdr["resolution"] = r.resolution;
  hdr["width"] = r.width;
  hdr["height"] = r.height;
  hdr["nodata"] = kNodataSentinel;
  std::ofstream js(with_suffix(base, ".json"));
  if (!js) throw IoError("cannot write " + with_suffix(base, ".json").string());
  js << hdr.dump(2) << "\n";
}

Raster read_raster(const std::filesystem::path& base) {
  const auto hdrPath = with_suffix(base, ".json");
  const auto binPath = with_suffix(base, ".f32");
  std::ifstream js(hdrPath);
  if (!js) throw MissingArtifactError("missing raster header " + hdrPath.string());
  nlohmann::json hdr;
  try {
    js >> hdr;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad raster header " + hdrPath.string() + ": " + e.what());
  }
  Raster r(hdr.at("width").get<int>(), hdr.at("height").get<int>(), hdr.at("resolution").get<double>(),
           hdr.at("originX").get<double>(), hdr.at("originY").get<double>());
  const float sentinel = static_cast<float>(hdr.value("nodata", kNodataSentinel));

  std::ifstream bin(binPath, std::ios::binary);
  if (!bin) throw MissingArtifactError("missing raster data " + binPath.string());
  std::vector<char> buf(r.values.size() * 4);
  bin.read(buf.data(), std::streamsize(buf.size()));
  if (bin.gcount() != std::streamsize(buf.size())) throw ValidationError("truncated raster " + binPath.string());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const float f = get_f32_le(buf.data() + 4 * i);
    if (f == sentinel) {
      r.nodata[i] = 1;
      r.values[i] = 0.0;
    } else {
      r.values[i] = f;
    }
  }
  return r;
}

void write_pgm(const Raster& gray, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << gray.width << " " << gray.height << "\n255\n";
  std::vector<unsigned char> row(gray.width);
  for (int r = gray.height - 1; r >= 0; --r) {
    for (int c = 0; c < gray.width; ++c) {
      const std::size_t i = gray.index(c, r);
      row[c] = gray.nodata[i] ? 0 : static_cast<unsigned char>(std::clamp(gray.values[i], 0.0, 255.0));
    }
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
}

}  // namespace ruinscan
