#include "ruinscan/chips.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ruinscan/error.hpp"

namespace ruinscan {

void AugmentPlan::validate() const {
  if (widenSteps.empty()) throw ValidationError("augment plan: no widening steps");
  for (std::size_t i = 0; i < widenSteps.size(); ++i) {
    if (!(widenSteps[i] >= 0 && widenSteps[i] < 2.0)) {
      throw ValidationError("augment plan: widening margins must lie in [0, 2) m");
    }
    if (i > 0 && !(widenSteps[i] > widenSteps[i - 1])) {
      throw ValidationError("augment plan: widening margins must be strictly increasing");
    }
  }
  if (rotations < 1 || rotations > 4) throw ValidationError("augment plan: rotations must be 1..4");
}

Chip crop_chip(const Raster& localDem, const Mbb& mbb, double margin, int size) {
  if (size < 8) throw ValidationError("crop_chip: chip size must be at least 8");
  if (localDem.width <= 0 || localDem.height <= 0) throw ValidationError("crop_chip: empty raster");
  const Mbb box = mbb.widened(margin);

  const double half = 0.5 * localDem.resolution;
  const std::vector<Vec2> extent{
      {localDem.x_of(0) - half, localDem.y_of(0) - half},
      {localDem.x_of(localDem.width - 1) + half, localDem.y_of(0) - half},
      {localDem.x_of(localDem.width - 1) + half, localDem.y_of(localDem.height - 1) + half},
      {localDem.x_of(0) - half, localDem.y_of(localDem.height - 1) + half}};
  if (!(std::abs(signed_area(clip_to_convex(box.corners(), extent))) > 0)) {
    throw ValidationError("crop_chip: box lies outside the raster");
  }

  Chip chip;
  chip.size = size;
  chip.pixels.resize(std::size_t(size) * size);
  const Vec2 u = box.major_axis();
  const Vec2 v = box.minor_axis();
  const double maxCol = localDem.width - 1;
  const double maxRow = localDem.height - 1;
  for (int i = 0; i < size; ++i) {
    const double dv = -0.5 * box.lenMinor + (i + 0.5) * box.lenMinor / size;
    for (int j = 0; j < size; ++j) {
      const double du = -0.5 * box.lenMajor + (j + 0.5) * box.lenMajor / size;
      const Vec2 p = box.center + u * du + v * dv;
      const double cf = std::clamp(localDem.col_of(p.x), 0.0, maxCol);
      const double rf = std::clamp(localDem.row_of(p.y), 0.0, maxRow);
      const int c0 = std::min(static_cast<int>(cf), localDem.width - 1);
      const int r0 = std::min(static_cast<int>(rf), localDem.height - 1);
      const int c1 = std::min(c0 + 1, localDem.width - 1);
      const int r1 = std::min(r0 + 1, localDem.height - 1);
      const double tc = cf - c0;
      const double tr = rf - r0;
      const double top = localDem.at(c0, r1) * (1 - tc) + localDem.at(c1, r1) * tc;
      const double bottom = localDem.at(c0, r0) * (1 - tc) + localDem.at(c1, r0) * tc;
      chip.pixels[std::size_t(i) * size + j] = bottom * (1 - tr) + top * tr;
    }
  }
  return chip;
}

Chip normalize(Chip chip) {
  if (chip.pixels.empty()) return chip;
  const auto [lo, hi] = std::minmax_element(chip.pixels.begin(), chip.pixels.end());
  const double range = *hi - *lo;
  if (!(range > 0)) {
    std::fill(chip.pixels.begin(), chip.pixels.end(), 0.0);
    return chip;
  }
  double mean = 0.0;
  for (double p : chip.pixels) mean += p;
  mean /= double(chip.pixels.size());
  for (double& p : chip.pixels) p = (p - mean) / range;
  return chip;
}

Chip rotate(const Chip& chip, int m) {
  Chip cur = chip;
  const int n = chip.size;
  for (int turn = 0; turn < ((m % 4) + 4) % 4; ++turn) {
    Chip next = cur;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) next.pixels[std::size_t(i) * n + j] = cur.at(j, n - 1 - i);
    }
    cur = std::move(next);
  }
  cur.rotation = ((chip.rotation + m) % 4 + 4) % 4;
  return cur;
}

std::vector<Chip> augment(const Raster& localDem, const Mbb& mbb, std::size_t candidateId, Label label,
                          const AugmentPlan& plan, int size) {
  plan.validate();
  const bool expand = label == Label::Positive ? plan.widenRotatePositives : plan.widenRotateNegatives;
  std::vector<Chip> out;
  if (!expand) {
    out.push_back(test_chip(localDem, mbb, candidateId, size));
    return out;
  }
  for (std::size_t n = 0; n < plan.widenSteps.size(); ++n) {
    Chip base = normalize(crop_chip(localDem, mbb, plan.widenSteps[n], size));
    base.sourceCandidateId = candidateId;
    base.widenStep = int(n);
    base.rotation = 0;
    for (int m = 0; m < plan.rotations; ++m) out.push_back(rotate(base, m));
  }
  return out;
}

Chip test_chip(const Raster& localDem, const Mbb& mbb, std::size_t candidateId, int size) {
  Chip c = normalize(crop_chip(localDem, mbb, 0.0, size));
  c.sourceCandidateId = candidateId;
  return c;
}

void write_chip(const Chip& chip, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write chip " + path.string());
  for (double p : chip.pixels) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(p));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    os.write(reinterpret_cast<const char*>(&bits), 4);
  }
}

Chip read_chip(const std::filesystem::path& path, int size) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("missing chip " + path.string());
  Chip chip;
  chip.size = size;
  std::vector<char> buf(std::size_t(size) * size * 4);
  is.read(buf.data(), std::streamsize(buf.size()));
  if (is.gcount() != std::streamsize(buf.size())) {
    throw ValidationError("chip " + path.string() + " does not hold " + std::to_string(size) + "x" +
                          std::to_string(size) + " pixels");
  }
  chip.pixels.resize(std::size_t(size) * size);
  for (std::size_t i = 0; i < chip.pixels.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, buf.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    chip.pixels[i] = std::bit_cast<float>(bits);
  }
  return chip;
}

void write_chip_index(std::span<const ChipEntry> entries, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "chip_id,candidate_id,n,m,label,split\n";
  for (const auto& e : entries) {
    os << e.chipId << "," << e.candidateId << "," << e.widenStep << "," << e.rotation << ","
       << (e.label == Label::Positive ? 1 : 0) << "," << e.split << "\n";
  }
}

std::vector<ChipEntry> read_chip_index(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("missing chip index " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "chip_id,candidate_id,n,m,label,split") throw ValidationError("unexpected chip index header");
  std::vector<ChipEntry> out;
  std::size_t lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[6];
    for (auto& s : f) std::getline(ss, s, ',');
    try {
      ChipEntry e;
      e.chipId = f[0];
      e.candidateId = std::stoull(f[1]);
      e.widenStep = std::stoi(f[2]);
      e.rotation = std::stoi(f[3]);
      e.label = f[4] == "1" ? Label::Positive : Label::Negative;
      e.split = f[5];
      out.push_back(std::move(e));
    } catch (const std::exception&) {
      throw ParseError(lineNo, "malformed chip index row in " + path.string());
    }
  }
  return out;
}

}  // namespace ruinscan
