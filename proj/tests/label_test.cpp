#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "ruinscan/error.hpp"
#include "ruinscan/label.hpp"
#include "support.hpp"

using namespace ruinscan;

namespace {

Mbb make_mbb(Vec2 c, double major, double minor, double angle) {
  Mbb m;
  m.center = c;
  m.lenMajor = major;
  m.lenMinor = minor;
  m.angle = angle;
  return m;
}

AnnotationPolygon make_poly(std::string id, std::vector<Vec2> ring) {
  if (signed_area(ring) < 0) std::reverse(ring.begin(), ring.end());
  if (!(ring.front() == ring.back())) ring.push_back(ring.front());
  AnnotationPolygon p;
  p.id = std::move(id);
  p.ring = std::move(ring);
  p.areaSqM = signed_area(p.ring);
  return p;
}

// Star-shaped (possibly concave) polygon around c.
std::vector<Vec2> random_star(std::mt19937_64& gen, Vec2 c) {
  std::uniform_int_distribution<int> count(3, 12);
  std::uniform_real_distribution<double> radius(1.0, 3.0);
  const int n = count(gen);
  std::vector<Vec2> ring;
  for (int k = 0; k < n; ++k) {
    const double a = 2 * std::numbers::pi * k / n;
    const double r = radius(gen);
    ring.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return ring;
}

// Counts 0.01 m cell centers inside both shapes.
double rasterized_intersection(const Mbb& m, const AnnotationPolygon& p) {
  const BoundingBox b = bounding_box(p.ring);
  const double h = 0.01;
  std::size_t hits = 0;
  for (double y = std::floor(b.minY / h) * h + h / 2; y < b.maxY; y += h)
    for (double x = std::floor(b.minX / h) * h + h / 2; x < b.maxX; x += h)
      if (m.contains({x, y}, 0.0) && point_in_polygon({x, y}, p.ring)) ++hits;
  return double(hits) * h * h;
}

LabeledCandidate labeled(Label l) {
  LabeledCandidate c;
  c.label = l;
  return c;
}

}  // namespace

TEST(HouseRule, ThresholdsAreInclusive) {
  const HouseRule rule;
  EXPECT_TRUE(rule.satisfied(0.3, 0.3));
  EXPECT_FALSE(rule.satisfied(0.2999, 0.3));
  EXPECT_FALSE(rule.satisfied(0.3, 0.2999));
  EXPECT_TRUE(rule.satisfied(1.0, 0.5));
}

TEST(HouseRule, Validation) {
  HouseRule rule;
  rule.a1 = 0;
  EXPECT_THROW(rule.validate(), ValidationError);
  rule.a1 = 1.2;
  EXPECT_THROW(rule.validate(), ValidationError);
}

TEST(EligibleHouses, AreaThresholdIsInclusive) {
  const std::vector<AnnotationPolygon> all{make_poly("a", {{0, 0}, {4, 0}, {4, 5}, {0, 5}}),
                                           make_poly("b", {{0, 0}, {4, 0}, {4, 4.99}, {0, 4.99}})};
  const auto houses = eligible_houses(all, HouseRule{});
  ASSERT_EQ(houses.size(), 1u);
  EXPECT_EQ(houses[0].id, "a");
}

TEST(IntersectionArea, SimpleCases) {
  const auto unit = make_poly("u", {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_NEAR(intersection_area(make_mbb({0.5, 0.5}, 1, 1, 0), unit), 1.0, 1e-12);
  EXPECT_EQ(intersection_area(make_mbb({10, 10}, 1, 1, 0), unit), 0.0);
}

TEST(IntersectionArea, MatchesRasterizationOracle) {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> off(-1, 1), side(1.5, 5), angle(0, std::numbers::pi);
  for (int trial = 0; trial < 100; ++trial) {
    const auto poly = make_poly("p", random_star(gen, {50 + off(gen), 20 + off(gen)}));
    double a = side(gen), b = side(gen);
    const Mbb m = make_mbb({50 + off(gen), 20 + off(gen)}, std::max(a, b), std::min(a, b), angle(gen));
    const double got = intersection_area(m, poly);
    const double oracle = rasterized_intersection(m, poly);
    ASSERT_GT(oracle, 0.25);
    EXPECT_NEAR(got, oracle, 0.01 * oracle) << "trial " << trial;
  }
}

TEST(IntersectionArea, SymmetricForConvexShapes) {
  std::mt19937_64 gen(102);
  std::uniform_real_distribution<double> off(-1.5, 1.5), side(1, 5), angle(0, std::numbers::pi);
  for (int trial = 0; trial < 50; ++trial) {
    const Mbb a = make_mbb({off(gen), off(gen)}, 5, side(gen) * 0.9, angle(gen));
    const Mbb b = make_mbb({off(gen), off(gen)}, 5, side(gen) * 0.9, angle(gen));
    const auto aPoly = make_poly("a", a.corners()), bPoly = make_poly("b", b.corners());
    const double ab = intersection_area(a, bPoly), ba = intersection_area(b, aPoly);
    EXPECT_NEAR(ab, ba, 1e-9 * std::max(1.0, ab));
  }
}

TEST(LabelCandidates, IdenticalShapesArePositive) {
  const auto house = make_poly("h", {{0, 0}, {5, 0}, {5, 5}, {0, 5}});
  const auto out = label_candidates(std::vector{make_mbb({2.5, 2.5}, 5, 5, 0)}, std::vector{house}, HouseRule{});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].label, Label::Positive);
  EXPECT_EQ(out[0].matchedAnnotationId, "h");
  EXPECT_NEAR(out[0].overlapFracOfBox, 1.0, 1e-12);
  EXPECT_NEAR(out[0].overlapFracOfHouse, 1.0, 1e-12);
}

TEST(LabelCandidates, ExactBoundaryOverlapIsPositive) {
  // Box and house are both 10 x 2 and share a 3 x 2 strip: (0.3, 0.3).
  const auto house = make_poly("h", {{7, 0}, {17, 0}, {17, 2}, {7, 2}});
  const auto out = label_candidates(std::vector{make_mbb({5, 1}, 10, 2, 0)}, std::vector{house}, HouseRule{});
  EXPECT_EQ(out[0].overlapFracOfBox, 0.3);
  EXPECT_EQ(out[0].overlapFracOfHouse, 0.3);
  EXPECT_EQ(out[0].label, Label::Positive);
}

TEST(LabelCandidates, JustBelowBoundaryIsNegative) {
  // Shared strip 2.999 x 2 of two 10 x 2 shapes: (0.2999, 0.2999).
  const auto house = make_poly("h", {{7.001, 0}, {17.001, 0}, {17.001, 2}, {7.001, 2}});
  const auto out = label_candidates(std::vector{make_mbb({5, 1}, 10, 2, 0)}, std::vector{house}, HouseRule{});
  EXPECT_NEAR(out[0].overlapFracOfBox, 0.2999, 1e-12);
  EXPECT_EQ(out[0].label, Label::Negative);
}

TEST(LabelCandidates, HugeBoxOverSmallHouseIsNegative) {
  const auto house = make_poly("h", {{0, 0}, {5, 0}, {5, 5}, {0, 5}});
  // Box covers half the house but the overlap is only a tenth of the box.
  const auto out =
      label_candidates(std::vector{make_mbb({5, 2.5}, 25, 5, 0)}, std::vector{house}, HouseRule{});
  EXPECT_NEAR(out[0].overlapFracOfHouse, 1.0, 1e-12);
  EXPECT_NEAR(out[0].overlapFracOfBox, 0.2, 1e-12);
  EXPECT_EQ(out[0].label, Label::Negative);
}

TEST(LabelCandidates, LargestIntersectionWins) {
  const std::vector<AnnotationPolygon> houses{make_poly("a", {{0, 0}, {5, 0}, {5, 5}, {0, 5}}),
                                              make_poly("b", {{4, 0}, {9, 0}, {9, 5}, {4, 5}})};
  const auto out = label_candidates(std::vector{make_mbb({5.5, 2.5}, 5, 5, 0)}, houses, HouseRule{});
  EXPECT_EQ(out[0].label, Label::Positive);
  EXPECT_EQ(out[0].matchedAnnotationId, "b");
}

TEST(LabelCandidates, PositivesRespectRecordedFractions) {
  std::mt19937_64 gen(103);
  std::uniform_real_distribution<double> off(-3, 3), side(3, 8), angle(0, std::numbers::pi);
  std::vector<AnnotationPolygon> houses;
  for (int i = 0; i < 5; ++i) {
    const Mbb h = make_mbb({20.0 * i, 0}, 6, 4, angle(gen));
    houses.push_back(make_poly("h" + std::to_string(i), h.corners()));
  }
  std::vector<Mbb> boxes;
  for (int i = 0; i < 200; ++i) {
    double a = side(gen), b = side(gen);
    boxes.push_back(make_mbb({20.0 * (i % 5) + off(gen), off(gen)}, std::max(a, b), std::min(a, b), angle(gen)));
  }
  for (const auto& c : label_candidates(boxes, houses, HouseRule{})) {
    if (c.label != Label::Positive) continue;
    const double overlap = c.overlapFracOfBox * c.mbb.area();
    EXPECT_GE(overlap, 0.3 * std::max(c.mbb.area(), 24.0) - 1e-9);
  }
}

TEST(Unmatched, ListsHousesWithoutPositives) {
  const std::vector<AnnotationPolygon> houses{make_poly("a", {{0, 0}, {5, 0}, {5, 5}, {0, 5}}),
                                              make_poly("b", {{40, 0}, {45, 0}, {45, 5}, {40, 5}})};
  const auto out = label_candidates(std::vector{make_mbb({2.5, 2.5}, 5, 5, 0)}, houses, HouseRule{});
  EXPECT_EQ(unmatched_annotations(out, houses), std::vector<std::string>{"b"});
}

TEST(Split, LargeSurveyCounts) {
  std::vector<LabeledCandidate> cands;
  for (int i = 0; i < 60; ++i) cands.push_back(labeled(Label::Positive));
  for (int i = 0; i < 1745; ++i) cands.push_back(labeled(Label::Negative));
  SplitSpec spec{44.0 / 60.0, 1056.0 / 1745.0, 5};
  const Split s = split(cands, spec);
  EXPECT_EQ(s.trainPos.size(), 44u);
  EXPECT_EQ(s.testPos.size(), 16u);
  EXPECT_EQ(s.trainNeg.size(), 1056u);
  EXPECT_EQ(s.testNeg.size(), 689u);
}

TEST(Split, IsDeterministicPartition) {
  std::vector<LabeledCandidate> cands;
  std::mt19937_64 gen(104);
  for (int i = 0; i < 300; ++i) cands.push_back(labeled(gen() % 3 == 0 ? Label::Positive : Label::Negative));
  const SplitSpec spec{0.7, 0.6, 42};
  const Split a = split(cands, spec), b = split(cands, spec);
  EXPECT_EQ(a.trainPos, b.trainPos);
  EXPECT_EQ(a.trainNeg, b.trainNeg);
  std::set<std::size_t> pos, neg;
  for (auto i : a.trainPos) pos.insert(i);
  for (auto i : a.testPos) pos.insert(i);
  for (auto i : a.trainNeg) neg.insert(i);
  for (auto i : a.testNeg) neg.insert(i);
  EXPECT_EQ(pos.size(), a.trainPos.size() + a.testPos.size());
  EXPECT_EQ(neg.size(), a.trainNeg.size() + a.testNeg.size());
  for (std::size_t i = 0; i < cands.size(); ++i)
    EXPECT_EQ((cands[i].label == Label::Positive ? pos : neg).count(i), 1u);
  EXPECT_TRUE(std::is_sorted(a.testNeg.begin(), a.testNeg.end()));
  const Split other = split(cands, SplitSpec{0.7, 0.6, 43});
  EXPECT_NE(a.trainNeg, other.trainNeg);
}
