#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ruinscan/label.hpp"
#include "ruinscan/segment.hpp"

#include <json.hpp>

namespace ruinscan {

struct GeomFeatures {
  double areaSqM = 0.0;
  double circumferenceM = 0.0;
  double aspect = 0.0;
  double fillRatio = 0.0;  // A(contour) / A(box)
  double contourCount = 0.0;

  static constexpr int kCount = 5;
  std::vector<double> to_vector() const {
    return {areaSqM, circumferenceM, aspect, fillRatio, contourCount};
  }
};

/// Geometry of one candidate. contourCount counts the reduced contours whose
/// test vertex lies inside the candidate's box (the candidate itself included).
GeomFeatures extract_geom_features(const Segment& candidate, std::span<const Contour> reducedContours);

/// Training/scoring input: one chip plus its candidate's geometry.
struct Sample {
  std::size_t candidateId = 0;
  int chipSize = 0;
  std::vector<double> pixels;  // empty for geometry-only models
  GeomFeatures geom;
  Label label = Label::Negative;
};

enum class ScorerKind { ReferenceLinear, External };

struct ScorerSpec {
  ScorerKind kind = ScorerKind::ReferenceLinear;
  int inputDownsample = 20;  // pixels per side after block averaging; 0 disables pixel input
  double learningRate = 0.5;
  int epochs = 300;
  double l2 = 1e-3;
  std::uint64_t seed = 0;

  void validate(int chipSize) const;
};

struct EnsembleSpec {
  int q = 10;
  double subsampleFrac = 0.9;
  std::vector<std::uint64_t> seeds;  // q entries; empty means 0..q-1

  void validate() const;
  std::uint64_t seed_for(int model) const;
};

/// Anything that maps a sample to a confidence in [0, 1].
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const Sample& sample) const = 0;
};

/// Logistic model over block-averaged chip pixels and standardized geometry.
class LinearModel : public Scorer {
 public:
  LinearModel() = default;
  LinearModel(int chipSize, int downsample);

  double score(const Sample& sample) const override;
  std::vector<double> features(const Sample& sample) const;

  int chip_size() const { return chipSize_; }
  int downsample() const { return downsample_; }
  std::size_t feature_count() const;

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  double& bias() { return bias_; }
  double bias() const { return bias_; }

  /// Fits geometry standardization constants on the given samples.
  void fit_standardization(std::span<const Sample> samples, std::span<const std::size_t> subset);

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);

 private:
  int chipSize_ = 0;
  int downsample_ = 0;
  std::vector<double> weights_;
  double bias_ = 0.0;
  std::vector<double> geomMean_ = std::vector<double>(GeomFeatures::kCount, 0.0);
  std::vector<double> geomStd_ = std::vector<double>(GeomFeatures::kCount, 1.0);
};

/// Mean binary cross-entropy plus (l2 / 2) * |w|^2 over precomputed feature
/// rows. Parameters are the weights followed by the bias.
class LogisticObjective {
 public:
  LogisticObjective(std::vector<std::vector<double>> rows, std::vector<double> targets, double l2);

  double loss(std::span<const double> params) const;
  /// Returns the loss and writes the analytic gradient into `grad`.
  double loss_and_gradient(std::span<const double> params, std::span<double> grad) const;
  std::size_t parameter_count() const { return dims_ + 1; }

 private:
  std::vector<std::vector<double>> rows_;
  std::vector<double> targets_;
  double l2_;
  std::size_t dims_;
};

/// Trains one model by full-batch gradient descent on samples[subset].
LinearModel train_model(std::span<const Sample> samples, std::span<const std::size_t> subset,
                        const ScorerSpec& spec, std::uint64_t seed);

/// q models, model i fitted on a uniform subsample drawn with seed_for(i).
std::vector<LinearModel> train_ensemble(std::span<const Sample> samples, const ScorerSpec& spec,
                                        const EnsembleSpec& ens, int threads = 1);

enum class FusionMode { Robust, Pessimistic, Optimistic };
inline constexpr FusionMode kFusionModes[] = {FusionMode::Robust, FusionMode::Pessimistic,
                                              FusionMode::Optimistic};
const char* to_string(FusionMode mode);

struct ScoreRecord {
  std::size_t candidateId = 0;
  std::vector<double> perModel;
  double robust = 0.0;       // median
  double pessimistic = 0.0;  // min
  double optimistic = 0.0;   // max
  Label label = Label::Negative;

  double fused(FusionMode mode) const;
};

/// Order statistics of the per-model scores; even counts use the mean of the
/// two middle values as median.
ScoreRecord fuse(std::size_t candidateId, std::vector<double> perModel, Label label);

std::vector<ScoreRecord> score(std::span<const LinearModel> models, std::span<const Sample> samples);

/// Pre-computed per-model scores from an external scorer, keyed by candidate.
/// CSV columns candidate_id,model,score with models numbered from 1.
using ExternalScores = std::map<std::size_t, std::vector<double>>;
ExternalScores read_external_scores(const std::filesystem::path& csv);
std::vector<ScoreRecord> score_external(const ExternalScores& scores, std::span<const Sample> samples);

/// Strict threshold: fused score > sigma.
bool classify(const ScoreRecord& record, double sigma, FusionMode mode);

/// Geometry-only logistic baseline over GeomFeatures.
LinearModel train_feature_baseline(std::span<const Sample> samples, const ScorerSpec& spec);

/// Area under the ROC curve (Mann-Whitney, ties count one half).
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

void write_models(std::span<const LinearModel> models, const ScorerSpec& spec, const EnsembleSpec& ens,
                  const std::filesystem::path& path);
std::vector<LinearModel> read_models(const std::filesystem::path& path);

void write_scores_csv(std::span<const ScoreRecord> records, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

}  // namespace ruinscan
