#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ruinscan/geometry.hpp"
#include "ruinscan/ingest.hpp"

#include <json.hpp>

namespace ruinscan {

struct TerrainWave {
  double amplitudeM = 1.0;
  double wavelengthM = 50.0;
  double directionRad = 0.0;
  double phaseRad = 0.0;
};

struct SiteSpec {
  double extentX = 500.0;
  double extentY = 500.0;
  double pointDensity = 11.1;  // ground returns per m^2
  double positionJitter = 0.0;  // fraction of the lattice spacing; 1 = uniform within each cell
  int houses = 50;
  double sideMin = 4.5;
  double sideMax = 8.0;
  double minFootprintSqM = 20.0;
  double wallHeightMin = 0.4;
  double wallHeightMax = 0.5;
  double wallThickness = 0.5;
  double entranceProb = 0.3;  // chance a house has a doorway gap in one wall
  double entranceWidth = 1.0;
  double houseSpacing = 4.0;  // minimum gap between house footprints
  std::vector<TerrainWave> terrain{{2.0, 60.0, 0.3, 0.0}, {1.5, 45.0, 1.9, 1.0}};
  double lambdaM = 3.0;              // terrain wavelengths must be >= 4 * lambdaM
  double vegetationSpikeRate = 0.05;  // extra high returns per m^2
  double spikeHeightMin = 2.0;
  double spikeHeightMax = 15.0;
  int shrubs = 12;  // dense low-vegetation clumps whose canopy returns hide the ground
  double shrubRadiusMin = 1.2;
  double shrubRadiusMax = 2.2;
  double shrubHeightMin = 0.4;
  double shrubHeightMax = 1.0;
  double shrubReturnDensity = 30.0;  // canopy returns per m^2 inside a clump
  double noiseSigmaM = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PlantedHouse {
  std::string id;
  Vec2 center;
  double width = 0.0;  // outer side along `angle`
  double depth = 0.0;  // outer side across
  double angle = 0.0;
  double wallHeight = 0.0;
  double wallThickness = 0.0;
  bool entrance = false;

  std::vector<Vec2> footprint() const;  // CCW, closed
  double area() const { return width * depth; }
};

struct PlantedShrub {
  Vec2 center;
  double radius = 0.0;
  double height = 0.0;
};

struct SyntheticSite {
  PointCloud cloud;
  std::vector<PlantedHouse> houses;
  std::vector<PlantedShrub> shrubs;
  std::size_t spikeReturns = 0;

  double terrain_at(const SiteSpec& spec, double x, double y) const;
  nlohmann::json manifest(const SiteSpec& spec) const;
};

/// Throws when the houses cannot be placed in 1000 rejection-sampling attempts.
SyntheticSite generate_site(const SiteSpec& spec);

double terrain_height(const SiteSpec& spec, double x, double y);

/// Writes site.xyz, annotations.geojson and truth.json into `dir`.
void write_site(const SyntheticSite& site, const SiteSpec& spec, const std::filesystem::path& dir);

}  // namespace ruinscan
