#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ruinscan/ingest.hpp"
#include "ruinscan/segment.hpp"

namespace ruinscan {

struct HouseRule {
  double a1 = 0.3;  // minimum overlap as a fraction of the box
  double a2 = 0.3;  // minimum overlap as a fraction of the house
  double minHouseAreaSqM = 20.0;

  void validate() const;
  /// Inclusive on both thresholds.
  bool satisfied(double fracOfBox, double fracOfHouse) const;
};

enum class Label { Negative = 0, Positive = 1 };

struct LabeledCandidate {
  Mbb mbb;
  Label label = Label::Negative;
  std::optional<std::string> matchedAnnotationId;
  double overlapFracOfBox = 0.0;
  double overlapFracOfHouse = 0.0;
};

/// Annotations large enough to count as houses.
std::vector<AnnotationPolygon> eligible_houses(std::span<const AnnotationPolygon> annotations,
                                               const HouseRule& rule);

/// Area of the part of `poly` inside the rotated rectangle.
double intersection_area(const Mbb& mbb, const AnnotationPolygon& poly);

/// `annotations` must already be restricted to eligible houses. A positive
/// records the qualifying annotation with the largest intersection; a negative
/// records the fractions of its largest-intersection annotation, if any.
std::vector<LabeledCandidate> label_candidates(std::span<const Mbb> mbbs,
                                               std::span<const AnnotationPolygon> annotations,
                                               const HouseRule& rule);

/// Annotations without any positive candidate.
std::vector<std::string> unmatched_annotations(std::span<const LabeledCandidate> labeled,
                                               std::span<const AnnotationPolygon> annotations);

struct SplitSpec {
  double trainFracPos = 0.7;
  double trainFracNeg = 0.6;
  std::uint64_t seed = 0;
};

/// Candidate indices per partition, each sorted ascending.
struct Split {
  std::vector<std::size_t> trainPos, trainNeg, testPos, testNeg;
};

Split split(std::span<const LabeledCandidate> candidates, const SplitSpec& spec);

}  // namespace ruinscan
