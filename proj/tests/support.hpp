#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ruinscan/geometry.hpp"
#include "ruinscan/raster.hpp"

namespace testsupport {

// Fresh scratch directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("ruinscan-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

// Rotated rectangle as a closed counter-clockwise ring.
inline std::vector<ruinscan::Vec2> rect_ring(ruinscan::Vec2 c, double w, double h, double angle) {
  const ruinscan::Vec2 u{std::cos(angle), std::sin(angle)}, v{-std::sin(angle), std::cos(angle)};
  std::vector<ruinscan::Vec2> r{c - u * (w / 2) - v * (h / 2), c + u * (w / 2) - v * (h / 2),
                                c + u * (w / 2) + v * (h / 2), c - u * (w / 2) + v * (h / 2)};
  r.push_back(r.front());
  return r;
}

}  // namespace testsupport
