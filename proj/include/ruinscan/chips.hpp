#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ruinscan/label.hpp"
#include "ruinscan/raster.hpp"
#include "ruinscan/segment.hpp"

namespace ruinscan {

/// Square image sampled from the local DEM over a (widened) box.
struct Chip {
  int size = 100;
  std::vector<double> pixels;  // row-major size x size
  std::size_t sourceCandidateId = 0;
  int widenStep = 0;  // n
  int rotation = 0;   // m, number of quarter turns

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * size + col]; }
};

struct AugmentPlan {
  std::vector<double> widenSteps{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 4.0 / 3.0, 5.0 / 3.0};
  int rotations = 4;
  bool widenRotatePositives = true;
  bool widenRotateNegatives = false;

  void validate() const;
};

/// Bilinear sample of the widened box on a size x size lattice. Chip row i
/// runs along the box's minor axis, column j along its major axis; samples
/// outside the raster take the nearest edge value.
Chip crop_chip(const Raster& localDem, const Mbb& mbb, double margin, int size);

/// (x - mean) / (max - min); a constant chip becomes all zeros.
Chip normalize(Chip chip);

/// One quarter turn applied `m` times: R(i, j) = J(j, N-1-i).
Chip rotate(const Chip& chip, int m);

/// Widening and rotation for one candidate. When the class is augmented this
/// yields widenSteps x rotations chips ordered by (n, m); otherwise the single
/// margin-0 chip. Every chip is normalized.
std::vector<Chip> augment(const Raster& localDem, const Mbb& mbb, std::size_t candidateId, Label label,
                          const AugmentPlan& plan, int size = 100);

/// Test-time chip: margin 0, no rotation.
Chip test_chip(const Raster& localDem, const Mbb& mbb, std::size_t candidateId, int size = 100);

// Chip store: <dir>/<chip_id>.f32 (row-major little-endian float32) and
// <dir>/index.csv with columns chip_id,candidate_id,n,m,label,split.
struct ChipEntry {
  std::string chipId;
  std::size_t candidateId = 0;
  int widenStep = 0;
  int rotation = 0;
  Label label = Label::Negative;
  std::string split;  // "train" or "test"
};

void write_chip(const Chip& chip, const std::filesystem::path& path);
Chip read_chip(const std::filesystem::path& path, int size);
void write_chip_index(std::span<const ChipEntry> entries, const std::filesystem::path& path);
std::vector<ChipEntry> read_chip_index(const std::filesystem::path& path);

}  // namespace ruinscan
