#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "ruinscan/error.hpp"
#include "ruinscan/ingest.hpp"
#include "support.hpp"

using namespace ruinscan;

TEST(ParseXyz, TwoReturnsAtOneSpot) {
  std::istringstream in("0 0 1.0\n0 0 3.5\n");
  const PointCloud c = parse_xyz(in);
  ASSERT_EQ(c.records.size(), 2u);
  EXPECT_EQ(c.bounds.minX, 0.0);
  EXPECT_EQ(c.bounds.maxX, 0.0);
  EXPECT_EQ(c.bounds.minY, 0.0);
  EXPECT_EQ(c.bounds.maxY, 0.0);
  EXPECT_EQ(c.records[1].z, 3.5);
}

TEST(ParseXyz, BoundsAreMinMax) {
  std::istringstream in("# header\n0 0 1\n\n10 5 2\n4,10,3\n");
  const PointCloud c = parse_xyz(in);
  EXPECT_EQ(c.records.size(), 3u);
  EXPECT_EQ(c.bounds.minX, 0.0);
  EXPECT_EQ(c.bounds.minY, 0.0);
  EXPECT_EQ(c.bounds.maxX, 10.0);
  EXPECT_EQ(c.bounds.maxY, 10.0);
}

TEST(ParseXyz, MalformedLineNamesLineNumber) {
  std::istringstream in("a b c\n");
  try {
    parse_xyz(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
  std::istringstream second("1 2 3\n1 2\n");
  try {
    parse_xyz(second);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseXyz, EmptyInputIsRejected) {
  std::istringstream in("# only a comment\n");
  EXPECT_THROW(parse_xyz(in), ValidationError);
}

TEST(LoadXyz, MissingFileIsIoError) {
  try {
    load_xyz("/nonexistent/ruinscan/cloud.xyz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Runtime);
  }
}

TEST(ReduceToGround, KeepsLowestReturn) {
  PointCloud c;
  c.records = {{0, 0, 3.5}, {0, 0, 1.0}};
  const auto g = reduce_to_ground(c);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].z0, 1.0);
}

TEST(ReduceToGround, DistinctLocationsPassThrough) {
  PointCloud c;
  c.records = {{0, 0, 2.0}, {5, 5, 7.0}};
  const auto g = reduce_to_ground(c);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].z0, 2.0);
  EXPECT_EQ(g[1].z0, 7.0);
}

TEST(ReduceToGround, MatchesSortedGroupingOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> coord(0, 100), z(0, 10), up(0.1, 20);
  PointCloud c;
  for (int i = 0; i < 900; ++i) c.records.push_back({coord(gen), coord(gen), z(gen)});
  // 100 of those locations get an extra, higher return.
  for (int i = 0; i < 100; ++i) {
    const auto base = c.records[std::size_t(i) * 9];
    c.records.push_back({base.x, base.y, base.z + up(gen)});
  }
  std::shuffle(c.records.begin(), c.records.end(), gen);

  // Oracle: exact-coordinate grouping through an ordered map.
  std::map<std::pair<double, double>, double> lowest;
  for (const auto& r : c.records) {
    auto [it, fresh] = lowest.emplace(std::pair{r.x, r.y}, r.z);
    if (!fresh) it->second = std::min(it->second, r.z);
  }
  const auto g = reduce_to_ground(c);
  ASSERT_EQ(g.size(), 900u);
  ASSERT_EQ(lowest.size(), 900u);
  for (const auto& p : g) EXPECT_EQ(p.z0, lowest.at({p.x, p.y}));
}

TEST(ReduceToGround, GroupsWithinTolerance) {
  PointCloud c;
  c.records = {{1.0, 1.0, 5.0}, {1.0 + 5e-7, 1.0 - 5e-7, 4.0}, {1.0 + 1e-3, 1.0, 3.0}};
  const auto g = reduce_to_ground(c, 1e-6);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].z0, 4.0);
  EXPECT_EQ(g[1].z0, 3.0);
}

TEST(ReduceToGround, EmptyCloudIsRejected) {
  EXPECT_THROW(reduce_to_ground(PointCloud{}), ValidationError);
}

namespace {

std::string feature_collection(const std::string& coordinates, const std::string& type = "Polygon") {
  return R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"h1"},)"
         R"("geometry":{"type":")" + type + R"(","coordinates":)" + coordinates + "}}]}";
}

}  // namespace

TEST(Annotations, UnitSquareArea) {
  const auto set = parse_annotations(feature_collection("[[[0,0],[1,0],[1,1],[0,1],[0,0]]]"));
  ASSERT_EQ(set.polygons.size(), 1u);
  EXPECT_EQ(set.polygons[0].id, "h1");
  EXPECT_DOUBLE_EQ(set.polygons[0].areaSqM, 1.0);
  EXPECT_EQ(set.polygons[0].ring.front(), set.polygons[0].ring.back());
}

TEST(Annotations, FourByFiveRectangle) {
  const auto set = parse_annotations(feature_collection("[[[0,0],[4,0],[4,5],[0,5],[0,0]]]"));
  EXPECT_DOUBLE_EQ(set.polygons[0].areaSqM, 20.0);
}

TEST(Annotations, ClockwiseRingIsReversed) {
  const auto set = parse_annotations(feature_collection("[[[0,0],[0,1],[1,1],[1,0],[0,0]]]"));
  EXPECT_DOUBLE_EQ(set.polygons[0].areaSqM, 1.0);
  EXPECT_GT(signed_area(set.polygons[0].ring), 0.0);
}

TEST(Annotations, HolesAreDroppedWithWarning) {
  const auto set = parse_annotations(
      feature_collection("[[[0,0],[4,0],[4,4],[0,4],[0,0]],[[1,1],[2,1],[2,2],[1,2],[1,1]]]"));
  EXPECT_DOUBLE_EQ(set.polygons[0].areaSqM, 16.0);
  EXPECT_EQ(set.warnings.size(), 1u);
}

TEST(Annotations, Rejections) {
  EXPECT_THROW(parse_annotations("{not json"), ValidationError);
  EXPECT_THROW(parse_annotations(feature_collection("[0,0]", "Point")), ValidationError);
  EXPECT_THROW(parse_annotations(feature_collection("[[[0,0],[1,1],[1,0],[0,1],[0,0]]]")), ValidationError);
}
