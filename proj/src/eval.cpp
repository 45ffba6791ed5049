#include "ruinscan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ruinscan/error.hpp"
#include "text.hpp"

namespace ruinscan {

ConfusionCounts confusion_at(std::span<const ScoreRecord> records, double sigma, FusionMode mode) {
  ConfusionCounts c;
  for (const auto& r : records) {
    const bool predicted = classify(r, sigma, mode);
    const bool actual = r.label == Label::Positive;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_score(const ConfusionCounts& c) {
  const double denom = 2.0 * double(c.tp) + double(c.fp) + double(c.fn);
  return denom > 0 ? 2.0 * double(c.tp) / denom : 0.0;
}

double missed_detection_rate(const ConfusionCounts& c) {
  const std::size_t pos = c.tp + c.fn;
  return pos ? double(c.fn) / double(pos) : 0.0;
}

double false_alarm_rate(const ConfusionCounts& c) {
  const std::size_t neg = c.fp + c.tn;
  return neg ? double(c.fp) / double(neg) : 0.0;
}

std::vector<double> default_sigma_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 100; ++k) grid.push_back(k / 100.0);
  return grid;
}

double equal_error_rate(std::span<const SweepPoint> points) {
  if (points.empty()) throw ValidationError("equal_error_rate: empty sweep");
  auto gap = [](const SweepPoint& p) { return p.missed - p.falseAlarm; };
  if (gap(points.front()) > 0) return 0.5 * (points.front().missed + points.front().falseAlarm);
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double d0 = gap(points[k]);
    const double d1 = gap(points[k + 1]);
    if (d0 <= 0 && d1 > 0) {
      const double t = -d0 / (d1 - d0);
      return points[k].missed + t * (points[k + 1].missed - points[k].missed);
    }
  }
  return 0.5 * (points.back().missed + points.back().falseAlarm);
}

ModeReport sweep(std::span<const ScoreRecord> records, FusionMode mode, std::span<const double> sigmaGrid) {
  if (sigmaGrid.empty()) throw ValidationError("sweep: empty threshold grid");
  if (!std::is_sorted(sigmaGrid.begin(), sigmaGrid.end())) throw ValidationError("sweep: threshold grid must be ascending");
  const bool hasPos = std::any_of(records.begin(), records.end(), [](const ScoreRecord& r) { return r.label == Label::Positive; });
  const bool hasNeg = std::any_of(records.begin(), records.end(), [](const ScoreRecord& r) { return r.label == Label::Negative; });
  if (!hasPos || !hasNeg) throw ValidationError("evaluation needs at least one positive and one negative candidate");

  ModeReport rep;
  rep.mode = mode;
  for (double sigma : sigmaGrid) {
    SweepPoint p;
    p.sigma = sigma;
    p.counts = confusion_at(records, sigma, mode);
    p.f1 = f1_score(p.counts);
    p.falseAlarm = false_alarm_rate(p.counts);
    p.missed = missed_detection_rate(p.counts);
    if (p.f1 > rep.bestF1 || rep.points.empty()) {
      rep.bestF1 = p.f1;
      rep.bestF1Sigma = sigma;
    }
    rep.points.push_back(p);
  }
  rep.eer = equal_error_rate(rep.points);
  return rep;
}

EvalReport evaluate(std::span<const ScoreRecord> records, std::span<const double> sigmaGrid) {
  EvalReport report;
  for (const auto& r : records) (r.label == Label::Positive ? report.positives : report.negatives)++;
  for (FusionMode mode : kFusionModes) report.modes.push_back(sweep(records, mode, sigmaGrid));
  return report;
}

namespace {

const char* colour(FusionMode mode) {
  switch (mode) {
    case FusionMode::Robust: return "#1b6ac9";
    case FusionMode::Pessimistic: return "#c0392b";
    case FusionMode::Optimistic: return "#27ae60";
  }
  return "#000";
}

struct Plot {
  double left = 60, top = 20, size = 400;

  double px(double x) const { return left + x * size; }
  double py(double y) const { return top + (1.0 - y) * size; }

  std::string frame(const std::string& xLabel, const std::string& yLabel) const {
    std::string s;
    s += "<rect x=\"" + detail::fmt(left, 1) + "\" y=\"" + detail::fmt(top, 1) + "\" width=\"" +
         detail::fmt(size, 1) + "\" height=\"" + detail::fmt(size, 1) + "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = k / 4.0;
      s += "<text x=\"" + detail::fmt(px(v), 1) + "\" y=\"" + detail::fmt(top + size + 16, 1) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + detail::fmt(v, 2) + "</text>\n";
      s += "<text x=\"" + detail::fmt(left - 6, 1) + "\" y=\"" + detail::fmt(py(v) + 4, 1) +
           "\" font-size=\"11\" text-anchor=\"end\">" + detail::fmt(v, 2) + "</text>\n";
    }
    s += "<text x=\"" + detail::fmt(px(0.5), 1) + "\" y=\"" + detail::fmt(top + size + 34, 1) +
         "\" font-size=\"12\" text-anchor=\"middle\">" + xLabel + "</text>\n";
    s += "<text x=\"14\" y=\"" + detail::fmt(py(0.5), 1) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         detail::fmt(py(0.5), 1) + ")\">" + yLabel + "</text>\n";
    return s;
  }

  std::string polyline(const std::vector<std::pair<double, double>>& xy, const char* stroke) const {
    std::string s = "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" + std::string(stroke) + "\" points=\"";
    for (const auto& [x, y] : xy) s += detail::fmt(px(x), 2) + "," + detail::fmt(py(y), 2) + " ";
    s += "\"/>\n";
    return s;
  }

  std::string legend(const EvalReport& report) const {
    std::string s;
    double y = top + 14;
    for (const auto& m : report.modes) {
      s += "<text x=\"" + detail::fmt(left + size + 12, 1) + "\" y=\"" + detail::fmt(y, 1) + "\" font-size=\"12\" fill=\"" +
           colour(m.mode) + "\">" + to_string(m.mode) + "</text>\n";
      y += 16;
    }
    return s;
  }
};

void write_svg(const std::filesystem::path& path, const std::string& body) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"580\" height=\"470\" font-family=\"sans-serif\">\n"
     << body << "</svg>\n";
}

}  // namespace

void emit_report(const EvalReport& report, const std::filesystem::path& outDir) {
  std::filesystem::create_directories(outDir);
  {
    std::ofstream os(outDir / "f1.csv");
    if (!os) throw IoError("cannot write f1.csv in " + outDir.string());
    os << "mode,sigma_x100,f1\n";
    for (const auto& m : report.modes) {
      for (const auto& p : m.points) {
        os << to_string(m.mode) << "," << std::lround(p.sigma * 100) << "," << detail::fmt(p.f1, 6) << "\n";
      }
    }
  }
  {
    std::ofstream os(outDir / "det.csv");
    if (!os) throw IoError("cannot write det.csv in " + outDir.string());
    os << "mode,false_alarm,missed_detection,sigma\n";
    for (const auto& m : report.modes) {
      for (const auto& p : m.points) {
        os << to_string(m.mode) << "," << detail::fmt(p.falseAlarm, 6) << "," << detail::fmt(p.missed, 6) << ","
           << detail::fmt(p.sigma, 2) << "\n";
      }
    }
  }
  {
    nlohmann::json j;
    for (const auto& m : report.modes) {
      j["eer"][to_string(m.mode)] = m.eer;
      j["best_f1"][to_string(m.mode)] = {{"f1", m.bestF1}, {"sigma", m.bestF1Sigma}};
    }
    j["counts"] = {{"positives", report.positives}, {"negatives", report.negatives}};
    std::ofstream os(outDir / "summary.json");
    if (!os) throw IoError("cannot write summary.json in " + outDir.string());
    os << j.dump(2) << "\n";
  }

  Plot plot;
  std::string f1Body = plot.frame("threshold", "F1");
  std::string detBody = plot.frame("false alarm rate", "missed detection rate");
  for (const auto& m : report.modes) {
    std::vector<std::pair<double, double>> f1, det;
    for (const auto& p : m.points) {
      f1.emplace_back(p.sigma, p.f1);
      det.emplace_back(p.falseAlarm, p.missed);
    }
    f1Body += plot.polyline(f1, colour(m.mode));
    detBody += plot.polyline(det, colour(m.mode));
  }
  f1Body += plot.legend(report);
  detBody += plot.legend(report);
  write_svg(outDir / "f1.svg", f1Body);
  write_svg(outDir / "det.svg", detBody);
}

}  // namespace ruinscan
