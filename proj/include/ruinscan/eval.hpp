#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "ruinscan/model.hpp"

namespace ruinscan {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

ConfusionCounts confusion_at(std::span<const ScoreRecord> records, double sigma, FusionMode mode);

/// Harmonic mean of precision and recall; 0 when both vanish.
double f1_score(const ConfusionCounts& c);
double missed_detection_rate(const ConfusionCounts& c);
double false_alarm_rate(const ConfusionCounts& c);

struct SweepPoint {
  double sigma = 0.0;
  ConfusionCounts counts;
  double f1 = 0.0;
  double falseAlarm = 0.0;
  double missed = 0.0;
};

struct ModeReport {
  FusionMode mode = FusionMode::Robust;
  std::vector<SweepPoint> points;
  double eer = 0.0;
  double bestF1 = 0.0;
  double bestF1Sigma = 0.0;
};

struct EvalReport {
  std::vector<ModeReport> modes;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// sigma = 0.00, 0.01, ..., 1.00
std::vector<double> default_sigma_grid();

/// Equal error rate from a threshold sweep: interpolates linearly between the
/// two grid points that bracket the sign change of (missed - falseAlarm).
double equal_error_rate(std::span<const SweepPoint> points);

ModeReport sweep(std::span<const ScoreRecord> records, FusionMode mode, std::span<const double> sigmaGrid);
EvalReport evaluate(std::span<const ScoreRecord> records, std::span<const double> sigmaGrid);

/// Writes f1.csv, det.csv, summary.json, f1.svg and det.svg into outDir.
void emit_report(const EvalReport& report, const std::filesystem::path& outDir);

}  // namespace ruinscan
