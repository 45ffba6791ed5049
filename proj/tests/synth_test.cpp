#include <gtest/gtest.h>

#include "ruinscan/error.hpp"
#include "ruinscan/ingest.hpp"
#include "ruinscan/raster.hpp"
#include "ruinscan/segment.hpp"
#include "ruinscan/synth.hpp"
#include "support.hpp"

using namespace ruinscan;

namespace {

SiteSpec small_site(std::uint64_t seed) {
  SiteSpec s;
  s.extentX = 80;
  s.extentY = 60;
  s.houses = 5;
  s.shrubs = 2;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Synth, RegenerationIsByteIdentical) {
  testsupport::ScratchDir a("synth-a"), b("synth-b");
  const SiteSpec spec = small_site(3);
  write_site(generate_site(spec), spec, a.path());
  write_site(generate_site(spec), spec, b.path());
  for (const char* f : {"site.xyz", "annotations.geojson", "truth.json"})
    EXPECT_EQ(testsupport::slurp(a.path() / f), testsupport::slurp(b.path() / f)) << f;
  SiteSpec other = spec;
  other.seed = 4;
  testsupport::ScratchDir c("synth-c");
  write_site(generate_site(other), other, c.path());
  EXPECT_NE(testsupport::slurp(a.path() / "site.xyz"), testsupport::slurp(c.path() / "site.xyz"));
}

TEST(Synth, AnnotationsAreEligibleHouses) {
  testsupport::ScratchDir dir("synth-ann");
  const SiteSpec spec = small_site(5);
  const auto site = generate_site(spec);
  write_site(site, spec, dir.path());
  const auto ann = load_annotations(dir.path() / "annotations.geojson");
  ASSERT_EQ(ann.polygons.size(), 5u);
  for (std::size_t i = 0; i < ann.polygons.size(); ++i) {
    EXPECT_GE(ann.polygons[i].areaSqM, 20.0);
    EXPECT_NEAR(ann.polygons[i].areaSqM, site.houses[i].area(), 1e-9);
  }
  const auto cloud = load_xyz(dir.path() / "site.xyz");
  EXPECT_EQ(cloud.records.size(), site.cloud.records.size());
}

TEST(Synth, HousesAreSeparatedAndInside) {
  const SiteSpec spec = small_site(6);
  const auto site = generate_site(spec);
  for (std::size_t i = 0; i < site.houses.size(); ++i) {
    for (const auto& p : site.houses[i].footprint()) {
      EXPECT_GE(p.x, 0.0);
      EXPECT_LE(p.x, spec.extentX);
      EXPECT_GE(p.y, 0.0);
      EXPECT_LE(p.y, spec.extentY);
    }
    for (std::size_t j = i + 1; j < site.houses.size(); ++j)
      EXPECT_GT(norm(site.houses[i].center - site.houses[j].center), spec.houseSpacing);
  }
}

TEST(Synth, GroundReturnsNeverBelowTerrain) {
  SiteSpec spec = small_site(7);
  spec.noiseSigmaM = 0;
  const auto site = generate_site(spec);
  for (const auto& r : site.cloud.records) EXPECT_GE(r.z, terrain_height(spec, r.x, r.y) - 1e-4);
}

TEST(Synth, FlatEmptySiteYieldsNoCandidates) {
  SiteSpec spec = small_site(8);
  spec.houses = 0;
  spec.shrubs = 0;
  spec.vegetationSpikeRate = 0;
  spec.noiseSigmaM = 0;
  spec.terrain.clear();
  const auto site = generate_site(spec);
  const Raster dem = grid_nearest(reduce_to_ground(site.cloud), 0.3, 3.0);
  const Raster local = localize(dem, {});
  for (double level : {0.05, 0.2, 0.5}) EXPECT_TRUE(segment_at_level(local, level, PrefilterRules{}).segments.empty());
}

TEST(Synth, ImpossiblePlacementFails) {
  SiteSpec spec = small_site(9);
  spec.extentX = 20;
  spec.extentY = 20;
  spec.houses = 30;
  EXPECT_THROW(generate_site(spec), ValidationError);
}

TEST(Synth, SpecValidation) {
  SiteSpec spec;
  spec.terrain = {{1.0, 5.0, 0.0, 0.0}};
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = SiteSpec{};
  spec.wallThickness = 3;
  EXPECT_THROW(spec.validate(), ValidationError);
}
