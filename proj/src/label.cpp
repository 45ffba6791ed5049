#include "ruinscan/label.hpp"

#include <algorithm>
#include <cmath>

#include "ruinscan/error.hpp"
#include "ruinscan/rng.hpp"

namespace ruinscan {

void HouseRule::validate() const {
  if (!(a1 > 0 && a1 <= 1 && a2 > 0 && a2 <= 1)) throw ValidationError("house rule: a1, a2 must lie in (0, 1]");
  if (!(minHouseAreaSqM >= 0)) throw ValidationError("house rule: minimum house area must be non-negative");
}

bool HouseRule::satisfied(double fracOfBox, double fracOfHouse) const {
  // Absorbs the last-bit rounding of area ratios at the inclusive boundary.
  constexpr double kSlack = 1e-12;
  return fracOfBox >= a1 - kSlack && fracOfHouse >= a2 - kSlack;
}

std::vector<AnnotationPolygon> eligible_houses(std::span<const AnnotationPolygon> annotations,
                                               const HouseRule& rule) {
  std::vector<AnnotationPolygon> out;
  for (const auto& a : annotations) {
    if (a.areaSqM >= rule.minHouseAreaSqM) out.push_back(a);
  }
  return out;
}

double intersection_area(const Mbb& mbb, const AnnotationPolygon& poly) {
  if (!(mbb.lenMajor > 0 && mbb.lenMinor > 0)) throw DegenerateGeometryError("intersection_area: empty box");
  const std::vector<Vec2> subject = open_ring(poly.ring);
  if (subject.size() < 3) throw DegenerateGeometryError("intersection_area: polygon " + poly.id + " is degenerate");
  const std::vector<Vec2> box = mbb.corners();
  const std::vector<Vec2> clipped = clip_to_convex(subject, box);
  const double a = std::abs(signed_area(clipped));
  return std::min(a, std::min(mbb.area(), poly.areaSqM));
}

std::vector<LabeledCandidate> label_candidates(std::span<const Mbb> mbbs,
                                               std::span<const AnnotationPolygon> annotations,
                                               const HouseRule& rule) {
  rule.validate();
  std::vector<BoundingBox> annBoxes;
  annBoxes.reserve(annotations.size());
  for (const auto& a : annotations) annBoxes.push_back(bounding_box(a.ring));

  std::vector<LabeledCandidate> out;
  out.reserve(mbbs.size());
  for (const Mbb& m : mbbs) {
    LabeledCandidate lc;
    lc.mbb = m;
    const BoundingBox box = bounding_box(m.corners());

    double bestPosArea = -1.0, bestAnyArea = 0.0;
    const AnnotationPolygon* bestPos = nullptr;
    const AnnotationPolygon* bestAny = nullptr;
    for (std::size_t k = 0; k < annotations.size(); ++k) {
      if (!box.overlaps(annBoxes[k])) continue;
      const AnnotationPolygon& h = annotations[k];
      const double inter = intersection_area(m, h);
      if (!(inter > 0)) continue;
      const double fb = inter / m.area();
      const double fh = inter / h.areaSqM;
      auto better = [&](double area, const AnnotationPolygon* cur, double curArea) {
        return cur == nullptr || area > curArea || (area == curArea && h.id < cur->id);
      };
      if (rule.satisfied(fb, fh) && better(inter, bestPos, bestPosArea)) {
        bestPos = &h;
        bestPosArea = inter;
      }
      if (better(inter, bestAny, bestAnyArea)) {
        bestAny = &h;
        bestAnyArea = inter;
      }
    }

    if (bestPos) {
      lc.label = Label::Positive;
      lc.matchedAnnotationId = bestPos->id;
      lc.overlapFracOfBox = bestPosArea / m.area();
      lc.overlapFracOfHouse = bestPosArea / bestPos->areaSqM;
    } else if (bestAny) {
      lc.overlapFracOfBox = bestAnyArea / m.area();
      lc.overlapFracOfHouse = bestAnyArea / bestAny->areaSqM;
    }
    out.push_back(std::move(lc));
  }
  return out;
}

std::vector<std::string> unmatched_annotations(std::span<const LabeledCandidate> labeled,
                                               std::span<const AnnotationPolygon> annotations) {
  std::vector<std::string> out;
  for (const auto& a : annotations) {
    const bool hit = std::any_of(labeled.begin(), labeled.end(), [&](const LabeledCandidate& c) {
      return c.label == Label::Positive && c.matchedAnnotationId == a.id;
    });
    if (!hit) out.push_back(a.id);
  }
  return out;
}

Split split(std::span<const LabeledCandidate> candidates, const SplitSpec& spec) {
  if (!(spec.trainFracPos > 0 && spec.trainFracPos < 1 && spec.trainFracNeg > 0 && spec.trainFracNeg < 1)) {
    throw ValidationError("split: train fractions must lie in (0, 1)");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    (candidates[i].label == Label::Positive ? pos : neg).push_back(i);
  }
  if (pos.empty()) throw ValidationError("split: no positive candidates");
  if (neg.empty()) throw ValidationError("split: no negative candidates");

  Rng rng(spec.seed);
  Split out;
  auto partition = [&](std::vector<std::size_t> ids, double frac, std::vector<std::size_t>& train,
                       std::vector<std::size_t>& test) {
    rng.shuffle(ids);
    const auto nTrain = static_cast<std::size_t>(std::llround(frac * double(ids.size())));
    train.assign(ids.begin(), ids.begin() + std::ptrdiff_t(nTrain));
    test.assign(ids.begin() + std::ptrdiff_t(nTrain), ids.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
  };
  partition(pos, spec.trainFracPos, out.trainPos, out.testPos);
  partition(neg, spec.trainFracNeg, out.trainNeg, out.testNeg);
  return out;
}

}  // namespace ruinscan
