#include "ruinscan/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "parallel.hpp"
#include "ruinscan/error.hpp"
#include "ruinscan/rng.hpp"
#include "text.hpp"

namespace ruinscan {

GeomFeatures extract_geom_features(const Segment& candidate, std::span<const Contour> reducedContours) {
  const Contour& c = candidate.contour;
  const double contourArea = std::abs(c.area());
  if (c.vertices.size() < 4 || !(contourArea > 0) || !(candidate.mbb.area() > 0)) {
    throw DegenerateGeometryError("extract_geom_features: degenerate candidate contour");
  }
  GeomFeatures f;
  f.areaSqM = candidate.mbb.area();
  f.circumferenceM = candidate.mbb.circumference();
  f.aspect = candidate.mbb.aspect();
  f.fillRatio = std::min(1.0, contourArea / candidate.mbb.area());
  std::size_t count = 0;
  for (const Contour& other : reducedContours) {
    if (candidate.mbb.contains(other.test_vertex())) ++count;
  }
  f.contourCount = double(std::max<std::size_t>(count, 1));
  return f;
}

void ScorerSpec::validate(int chipSize) const {
  if (inputDownsample < 0) throw ValidationError("scorer: downsample must be non-negative");
  if (inputDownsample > 0 && (chipSize % inputDownsample) != 0) {
    throw ValidationError("scorer: downsample " + std::to_string(inputDownsample) + " does not divide chip size " +
                          std::to_string(chipSize));
  }
  if (!(learningRate > 0) || epochs <= 0 || !(l2 > 0)) {
    throw ValidationError("scorer: learning rate, epochs and l2 must be positive");
  }
}

void EnsembleSpec::validate() const {
  if (q < 1) throw ValidationError("ensemble: q must be at least 1");
  if (!(subsampleFrac > 0 && subsampleFrac <= 1)) throw ValidationError("ensemble: subsample must lie in (0, 1]");
  if (!seeds.empty() && seeds.size() != std::size_t(q)) {
    throw ValidationError("ensemble: expected " + std::to_string(q) + " seeds");
  }
}

std::uint64_t EnsembleSpec::seed_for(int model) const {
  return seeds.empty() ? std::uint64_t(model) : seeds[std::size_t(model)];
}

// ---------------------------------------------------------------------------
// LinearModel
// ---------------------------------------------------------------------------

namespace {

// Scale-like geometry enters on a log scale before standardization.
std::vector<double> transformed_geometry(const GeomFeatures& g) {
  return {std::log1p(g.areaSqM), std::log1p(g.circumferenceM), g.aspect, g.fillRatio, std::log1p(g.contourCount)};
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

LinearModel::LinearModel(int chipSize, int downsample) : chipSize_(chipSize), downsample_(downsample) {
  weights_.assign(feature_count(), 0.0);
}

std::size_t LinearModel::feature_count() const {
  return std::size_t(downsample_) * downsample_ + GeomFeatures::kCount;
}

std::vector<double> LinearModel::features(const Sample& sample) const {
  std::vector<double> x;
  x.reserve(feature_count());
  if (downsample_ > 0) {
    if (sample.chipSize != chipSize_ || sample.pixels.size() != std::size_t(chipSize_) * chipSize_) {
      throw ValidationError("model expects " + std::to_string(chipSize_) + "x" + std::to_string(chipSize_) +
                            " chips, got " + std::to_string(sample.chipSize) + "x" + std::to_string(sample.chipSize));
    }
    const int block = chipSize_ / downsample_;
    const double inv = 1.0 / double(block * block);
    for (int bi = 0; bi < downsample_; ++bi) {
      for (int bj = 0; bj < downsample_; ++bj) {
        double acc = 0.0;
        for (int i = bi * block; i < (bi + 1) * block; ++i) {
          for (int j = bj * block; j < (bj + 1) * block; ++j) acc += sample.pixels[std::size_t(i) * chipSize_ + j];
        }
        x.push_back(acc * inv);
      }
    }
  }
  const std::vector<double> g = transformed_geometry(sample.geom);
  for (int k = 0; k < GeomFeatures::kCount; ++k) x.push_back((g[k] - geomMean_[k]) / geomStd_[k]);
  return x;
}

double LinearModel::score(const Sample& sample) const {
  const std::vector<double> x = features(sample);
  double z = bias_;
  for (std::size_t k = 0; k < x.size(); ++k) z += weights_[k] * x[k];
  return sigmoid(z);
}

void LinearModel::fit_standardization(std::span<const Sample> samples, std::span<const std::size_t> subset) {
  const int d = GeomFeatures::kCount;
  std::vector<double> sum(d, 0.0), sumSq(d, 0.0);
  for (std::size_t idx : subset) {
    const auto g = transformed_geometry(samples[idx].geom);
    for (int k = 0; k < d; ++k) {
      sum[k] += g[k];
      sumSq[k] += g[k] * g[k];
    }
  }
  const double n = double(std::max<std::size_t>(subset.size(), 1));
  for (int k = 0; k < d; ++k) {
    geomMean_[k] = sum[k] / n;
    const double var = std::max(0.0, sumSq[k] / n - geomMean_[k] * geomMean_[k]);
    geomStd_[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

nlohmann::json LinearModel::to_json() const {
  nlohmann::json j;
  j["chip_size"] = chipSize_;
  j["downsample"] = downsample_;
  j["bias"] = bias_;
  j["weights"] = weights_;
  j["geom_mean"] = geomMean_;
  j["geom_std"] = geomStd_;
  return j;
}

LinearModel LinearModel::from_json(const nlohmann::json& j) {
  LinearModel m(j.at("chip_size").get<int>(), j.at("downsample").get<int>());
  m.bias_ = j.at("bias").get<double>();
  m.weights_ = j.at("weights").get<std::vector<double>>();
  m.geomMean_ = j.at("geom_mean").get<std::vector<double>>();
  m.geomStd_ = j.at("geom_std").get<std::vector<double>>();
  if (m.weights_.size() != m.feature_count() || m.geomMean_.size() != GeomFeatures::kCount ||
      m.geomStd_.size() != GeomFeatures::kCount) {
    throw ValidationError("model JSON has inconsistent dimensions");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Objective and training
// ---------------------------------------------------------------------------

LogisticObjective::LogisticObjective(std::vector<std::vector<double>> rows, std::vector<double> targets, double l2)
    : rows_(std::move(rows)), targets_(std::move(targets)), l2_(l2), dims_(rows_.empty() ? 0 : rows_[0].size()) {}

double LogisticObjective::loss(std::span<const double> params) const {
  double acc = 0.0;
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    double z = params[dims_];
    for (std::size_t k = 0; k < dims_; ++k) z += params[k] * rows_[r][k];
    acc += softplus(z) - targets_[r] * z;
  }
  double reg = 0.0;
  for (std::size_t k = 0; k < dims_; ++k) reg += params[k] * params[k];
  return acc / double(rows_.size()) + 0.5 * l2_ * reg;
}

double LogisticObjective::loss_and_gradient(std::span<const double> params, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  double acc = 0.0;
  const double inv = 1.0 / double(rows_.size());
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const auto& x = rows_[r];
    double z = params[dims_];
    for (std::size_t k = 0; k < dims_; ++k) z += params[k] * x[k];
    acc += softplus(z) - targets_[r] * z;
    const double residual = (sigmoid(z) - targets_[r]) * inv;
    for (std::size_t k = 0; k < dims_; ++k) grad[k] += residual * x[k];
    grad[dims_] += residual;
  }
  double reg = 0.0;
  for (std::size_t k = 0; k < dims_; ++k) {
    reg += params[k] * params[k];
    grad[k] += l2_ * params[k];
  }
  return acc * inv + 0.5 * l2_ * reg;
}

namespace {

void require_both_classes(std::span<const Sample> samples, std::span<const std::size_t> subset) {
  bool pos = false, neg = false;
  for (std::size_t i : subset) (samples[i].label == Label::Positive ? pos : neg) = true;
  if (!pos || !neg) throw ValidationError("training data must contain both classes");
}

}  // namespace

LinearModel train_model(std::span<const Sample> samples, std::span<const std::size_t> subset, const ScorerSpec& spec,
                        std::uint64_t seed) {
  if (subset.empty()) throw ValidationError("train_model: empty training set");
  require_both_classes(samples, subset);
  const int chipSize = spec.inputDownsample > 0 ? samples[subset[0]].chipSize : 0;
  spec.validate(chipSize > 0 ? chipSize : 1);

  LinearModel model(chipSize, spec.inputDownsample);
  model.fit_standardization(samples, subset);

  std::vector<std::vector<double>> rows;
  std::vector<double> targets;
  rows.reserve(subset.size());
  for (std::size_t i : subset) {
    rows.push_back(model.features(samples[i]));
    targets.push_back(samples[i].label == Label::Positive ? 1.0 : 0.0);
  }
  LogisticObjective objective(std::move(rows), std::move(targets), spec.l2);

  Rng rng(seed);
  std::vector<double> params(objective.parameter_count());
  for (std::size_t k = 0; k + 1 < params.size(); ++k) params[k] = 0.01 * rng.normal();
  std::vector<double> grad(params.size());
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const double loss = objective.loss_and_gradient(params, grad);
    if (!std::isfinite(loss)) {
      throw Error(ErrorKind::Runtime, "training loss became non-finite at epoch " + std::to_string(epoch));
    }
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= spec.learningRate * grad[k];
  }

  std::copy(params.begin(), params.end() - 1, model.weights().begin());
  model.bias() = params.back();
  return model;
}

std::vector<LinearModel> train_ensemble(std::span<const Sample> samples, const ScorerSpec& spec,
                                        const EnsembleSpec& ens, int threads) {
  ens.validate();
  if (samples.empty()) throw ValidationError("train_ensemble: no training samples");
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  require_both_classes(samples, all);

  const auto take = std::max<std::size_t>(1, std::size_t(std::llround(ens.subsampleFrac * double(samples.size()))));
  std::vector<LinearModel> models(std::size_t(ens.q));
  detail::parallel_for(std::size_t(ens.q), threads, [&](std::size_t i) {
    const std::uint64_t seed = ens.seed_for(int(i));
    Rng rng(seed);
    std::vector<std::size_t> subset = all;
    // Partial Fisher-Yates: the first `take` slots are a uniform sample.
    for (std::size_t k = 0; k < take && k + 1 < subset.size(); ++k) {
      const std::size_t j = k + std::size_t(rng.below(subset.size() - k));
      std::swap(subset[k], subset[j]);
    }
    subset.resize(take);
    std::sort(subset.begin(), subset.end());
    models[i] = train_model(samples, subset, spec, seed);
  });
  return models;
}

// ---------------------------------------------------------------------------
// Scoring and fusion
// ---------------------------------------------------------------------------

const char* to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Robust: return "robust";
    case FusionMode::Pessimistic: return "pessimistic";
    case FusionMode::Optimistic: return "optimistic";
  }
  return "?";
}

double ScoreRecord::fused(FusionMode mode) const {
  switch (mode) {
    case FusionMode::Robust: return robust;
    case FusionMode::Pessimistic: return pessimistic;
    case FusionMode::Optimistic: return optimistic;
  }
  return robust;
}

ScoreRecord fuse(std::size_t candidateId, std::vector<double> perModel, Label label) {
  if (perModel.empty()) throw ValidationError("fuse: no model scores");
  ScoreRecord r;
  r.candidateId = candidateId;
  r.label = label;
  std::vector<double> sorted = perModel;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.pessimistic = sorted.front();
  r.optimistic = sorted.back();
  r.robust = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.perModel = std::move(perModel);
  return r;
}

std::vector<ScoreRecord> score(std::span<const LinearModel> models, std::span<const Sample> samples) {
  if (models.empty()) throw ValidationError("score: no models");
  std::vector<ScoreRecord> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    std::vector<double> per;
    per.reserve(models.size());
    for (const LinearModel& m : models) per.push_back(std::clamp(m.score(s), 0.0, 1.0));
    out.push_back(fuse(s.candidateId, std::move(per), s.label));
  }
  return out;
}

ExternalScores read_external_scores(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw MissingArtifactError("missing external scores " + csv.string());
  std::string line;
  std::getline(is, line);
  if (line != "candidate_id,model,score") throw ValidationError("external scores: expected header candidate_id,model,score");
  ExternalScores out;
  std::size_t lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    try {
      if (f.size() != 3) throw std::invalid_argument("fields");
      const std::size_t cand = std::stoull(f[0]);
      const std::size_t model = std::stoull(f[1]);  // 1-based, as in the s1..sq score columns
      const double s = std::stod(f[2]);
      if (model == 0 || !(s >= 0 && s <= 1)) throw std::invalid_argument("range");
      auto& v = out[cand];
      if (v.size() < model) v.resize(model, -1.0);
      v[model - 1] = s;
    } catch (const std::exception&) {
      throw ParseError(lineNo, "bad external score row in " + csv.string());
    }
  }
  return out;
}

std::vector<ScoreRecord> score_external(const ExternalScores& scores, std::span<const Sample> samples) {
  std::vector<ScoreRecord> out;
  std::size_t q = 0;
  for (const Sample& s : samples) {
    auto it = scores.find(s.candidateId);
    if (it == scores.end()) throw MissingArtifactError("no external score for candidate " + std::to_string(s.candidateId));
    if (q == 0) q = it->second.size();
    if (it->second.size() != q || std::any_of(it->second.begin(), it->second.end(), [](double v) { return v < 0; })) {
      throw ValidationError("external scores for candidate " + std::to_string(s.candidateId) + " are incomplete");
    }
    out.push_back(fuse(s.candidateId, it->second, s.label));
  }
  return out;
}

bool classify(const ScoreRecord& record, double sigma, FusionMode mode) { return record.fused(mode) > sigma; }

LinearModel train_feature_baseline(std::span<const Sample> samples, const ScorerSpec& spec) {
  ScorerSpec geomOnly = spec;
  geomOnly.inputDownsample = 0;
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return train_model(samples, all, geomOnly, spec.seed);
}

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over ties, then Mann-Whitney U.
  double rankSumPos = 0.0;
  std::size_t nPos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avgRank = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::Positive) {
        rankSumPos += avgRank;
        ++nPos;
      }
    }
    i = j;
  }
  const std::size_t nNeg = scores.size() - nPos;
  if (nPos == 0 || nNeg == 0) throw ValidationError("roc_auc: need both classes");
  return (rankSumPos - double(nPos) * double(nPos + 1) / 2.0) / (double(nPos) * double(nNeg));
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void write_models(std::span<const LinearModel> models, const ScorerSpec& spec, const EnsembleSpec& ens,
                  const std::filesystem::path& path) {
  nlohmann::json j;
  j["scorer"] = {{"kind", spec.kind == ScorerKind::External ? "external" : "reference-linear"},
                 {"input_downsample", spec.inputDownsample},
                 {"learning_rate", spec.learningRate},
                 {"epochs", spec.epochs},
                 {"l2", spec.l2},
                 {"seed", spec.seed}};
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < ens.q; ++i) seeds.push_back(ens.seed_for(i));
  j["ensemble"] = {{"q", ens.q}, {"subsample", ens.subsampleFrac}, {"seeds", seeds}};
  j["models"] = nlohmann::json::array();
  for (const auto& m : models) j["models"].push_back(m.to_json());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(1) << "\n";
}

std::vector<LinearModel> read_models(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("missing model file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
    std::vector<LinearModel> out;
    for (const auto& m : j.at("models")) out.push_back(LinearModel::from_json(m));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad model file " + path.string() + ": " + e.what());
  }
}

void write_scores_csv(std::span<const ScoreRecord> records, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  const std::size_t q = records.empty() ? 0 : records[0].perModel.size();
  os << "candidate_id";
  for (std::size_t k = 1; k <= q; ++k) os << ",s" << k;
  os << ",min,median,max,label\n";
  for (const auto& r : records) {
    os << r.candidateId;
    for (double s : r.perModel) os << "," << detail::fmt(s, 9);
    os << "," << detail::fmt(r.pessimistic, 9) << "," << detail::fmt(r.robust, 9) << ","
       << detail::fmt(r.optimistic, 9) << "," << (r.label == Label::Positive ? 1 : 0) << "\n";
  }
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("missing scores " + path.string());
  std::string line;
  std::getline(is, line);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 5 || header[0] != "candidate_id") throw ValidationError("unexpected scores header");
  const std::size_t q = header.size() - 5;
  std::vector<ScoreRecord> out;
  std::size_t lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw ParseError(lineNo, "wrong field count in " + path.string());
    try {
      std::vector<double> per;
      for (std::size_t k = 0; k < q; ++k) per.push_back(std::stod(f[1 + k]));
      ScoreRecord r = fuse(std::stoull(f[0]), std::move(per), f.back() == "1" ? Label::Positive : Label::Negative);
      // Keep the written fused values verbatim.
      r.pessimistic = std::stod(f[1 + q]);
      r.robust = std::stod(f[2 + q]);
      r.optimistic = std::stod(f[3 + q]);
      out.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw ParseError(lineNo, "non-numeric score in " + path.string());
    }
  }
  return out;
}

}  // namespace ruinscan
