// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ruinscan/chips.hpp"
#include "ruinscan/eval.hpp"
#include "ruinscan/label.hpp"
#include "ruinscan/model.hpp"
#include "ruinscan/pipeline.hpp"
#include "ruinscan/raster.hpp"
#include "ruinscan/segment.hpp"

namespace fs = std::filesystem;
using namespace ruinscan;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Mbb make_mbb(Vec2 c, double major, double minor, double angle) {
  Mbb m;
  m.center = c;
  m.lenMajor = major;
  m.lenMinor = minor;
  m.angle = angle;
  return m;
}

// ---- 1: geometry oracles

double sweep_min_area(const std::vector<Vec2>& pts) {
  double best = INFINITY;
  for (int step = 0; step < 1800; ++step) {
    const double a = step * 0.05 * std::numbers::pi / 180;
    const double c = std::cos(a), s = std::sin(a);
    double u0 = INFINITY, u1 = -INFINITY, v0 = INFINITY, v1 = -INFINITY;
    for (const auto& p : pts) {
      const double u = c * p.x + s * p.y, v = -s * p.x + c * p.y;
      u0 = std::min(u0, u), u1 = std::max(u1, u), v0 = std::min(v0, v), v1 = std::max(v1, v);
    }
    best = std::min(best, (u1 - u0) * (v1 - v0));
  }
  return best;
}

double rasterized_intersection(const Mbb& m, const AnnotationPolygon& p) {
  const BoundingBox b = bounding_box(p.ring);
  const double h = 0.01;
  std::size_t hits = 0;
  for (double y = std::floor(b.minY / h) * h + h / 2; y < b.maxY; y += h)
    for (double x = std::floor(b.minX / h) * h + h / 2; x < b.maxX; x += h)
      if (m.contains({x, y}, 0.0) && point_in_polygon({x, y}, p.ring)) ++hits;
  return double(hits) * h * h;
}

void criterion_geometry() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1001);
  std::uniform_real_distribution<double> u(-1, 1), scale(0.5, 20);
  std::uniform_int_distribution<int> count(3, 60);
  double worstMbb = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double sx = scale(gen), sy = scale(gen), rot = u(gen) * std::numbers::pi;
    std::vector<Vec2> pts;
    for (int i = count(gen); i > 0; --i) {
      const double x = sx * u(gen), y = sy * u(gen);
      pts.push_back({std::cos(rot) * x - std::sin(rot) * y, std::sin(rot) * x + std::cos(rot) * y});
    }
    const double oracle = sweep_min_area(pts);
    worstMbb = std::max(worstMbb, std::abs(min_bounding_box(pts).area() - oracle) / oracle);
  }

  std::uniform_real_distribution<double> off(-1, 1), side(1.5, 5), angle(0, std::numbers::pi), radius(1, 3);
  std::uniform_int_distribution<int> verts(3, 12);
  double worstInter = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec2 c{off(gen), off(gen)};
    const int n = verts(gen);
    AnnotationPolygon poly;
    poly.id = "p";
    for (int k = 0; k < n; ++k) {
      const double a = 2 * std::numbers::pi * k / n, r = radius(gen);
      poly.ring.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
    poly.ring.push_back(poly.ring.front());
    poly.areaSqM = signed_area(poly.ring);
    const double a = side(gen), b = side(gen);
    const Mbb m = make_mbb({off(gen), off(gen)}, std::max(a, b), std::min(a, b), angle(gen));
    const double oracle = rasterized_intersection(m, poly);
    worstInter = std::max(worstInter, std::abs(intersection_area(m, poly) - oracle) / oracle);
  }
  const double secs = seconds_since(t0);
  report(1, worstMbb <= 0.005 && worstInter <= 0.01 && secs < 60,
         fmt("mbb max rel err %.2e (<=5e-3), intersection max rel err %.2e (<=1e-2), %.1f s (<60)", worstMbb,
             worstInter, secs));
}

// ---- 2: spectral filter

Raster sine_raster(int n, double res, double wavelength) {
  Raster r(n, n, res);
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) r.at(col, row) = std::cos(2 * std::numbers::pi * r.x_of(col) / wavelength);
  return r;
}

double projected_amplitude(const Raster& r, double wavelength, int skip) {
  double num = 0, den = 0;
  for (int row = skip; row < r.height - skip; ++row)
    for (int col = skip; col < r.width - skip; ++col) {
      const double c = std::cos(2 * std::numbers::pi * r.x_of(col) / wavelength);
      num += r.at(col, row) * c;
      den += c * c;
    }
  return num / den;
}

void criterion_spectral() {
  const LocalizeParams gauss{3.0, Rolloff::Gaussian};
  std::mt19937_64 gen(1002);
  std::normal_distribution<double> n(0, 1);

  Raster surface(120, 90, 0.3);
  for (auto& v : surface.values) v = 800 + 3 * n(gen);
  const double range = valid_range(surface).span();
  const Raster flat = localize(surface, gauss);
  double mean = 0;
  for (double v : flat.values) mean += v;
  mean /= double(flat.values.size());
  const bool dcOk = std::abs(mean) <= 1e-9 * range;

  const double lambda = gauss.lambdaMeters;
  const double wlLong = 4 * lambda, wlShort = lambda / 2;
  const double hLong = localize_transfer(2 * std::numbers::pi / wlLong, gauss);
  const double hShort = localize_transfer(2 * std::numbers::pi / wlShort, gauss);
  const double aLong = projected_amplitude(localize(sine_raster(200, 0.3, wlLong), gauss), wlLong, 40);
  const double aShort = projected_amplitude(localize(sine_raster(200, 0.3, wlShort), gauss), wlShort, 10);
  const bool longOk = std::abs(aLong) <= hLong * 1.01;
  const bool shortOk = aShort >= hShort * 0.99;

  const LocalizeParams ideal{3.0, Rolloff::Ideal};
  Raster noise(96, 80, 0.3);
  for (auto& v : noise.values) v = n(gen);
  const Raster once = localize(noise, ideal), twice = localize(once, ideal);
  double worst = 0;
  for (std::size_t i = 0; i < once.values.size(); ++i) worst = std::max(worst, std::abs(once.values[i] - twice.values[i]));
  const bool idemOk = worst <= 1e-6;

  report(2, dcOk && longOk && shortOk && idemOk,
         fmt("DC |mean|/range %.1e; 4L amp %.4f vs H %.4f; L/2 amp %.4f", std::abs(mean) / range, aLong, hLong,
             aShort) +
             fmt(" vs H %.4f; ideal idempotence %.1e", hShort, worst));
}

// ---- 3: augmentation arithmetic

void criterion_augmentation() {
  std::mt19937_64 gen(1003);
  std::normal_distribution<double> n(0, 0.2);
  Raster r(220, 220, 0.3);
  for (auto& v : r.values) v = n(gen);
  std::uniform_real_distribution<double> pos(15, 50), side(4, 8), angle(0, std::numbers::pi);
  std::size_t chips = 0;
  bool identity = true;
  for (std::size_t k = 0; k < 44; ++k) {
    const double a = side(gen), b = side(gen);
    const Mbb m = make_mbb({pos(gen), pos(gen)}, std::max(a, b), std::min(a, b), angle(gen));
    const auto out = augment(r, m, k, Label::Positive, AugmentPlan{}, 100);
    chips += out.size();
    Chip c = out.front();
    for (int t = 0; t < 4; ++t) c = rotate(c, 1);
    identity = identity && c.pixels == out.front().pixels;
  }
  report(3, chips == 1056 && identity,
         fmt("44 positives -> %.0f chips (expect 1056); 4 quarter turns bitwise identity: ", double(chips)) +
             (identity ? "yes" : "no"));
}

// ---- 4: normalization on the synthetic site's chips

void criterion_normalization(const fs::path& ws) {
  const Raster local = read_raster(ws / "localize" / "local_dem");
  const json cands = json::parse(slurp(ws / "segment" / "candidates.json"));
  std::size_t chips = 0, degenerate = 0;
  double worstMean = 0, worstRange = 0;
  auto check = [&](const Chip& c) {
    ++chips;
    const auto [lo, hi] = std::minmax_element(c.pixels.begin(), c.pixels.end());
    double mean = 0;
    for (double p : c.pixels) mean += p;
    mean /= double(c.pixels.size());
    if (*hi == *lo) {
      ++degenerate;
      worstMean = std::max(worstMean, *hi == 0 ? 0.0 : 1.0);
      return;
    }
    worstMean = std::max(worstMean, std::abs(mean));
    worstRange = std::max(worstRange, std::abs(*hi - *lo - 1.0));
  };
  for (const auto& c : cands.at("candidates")) {
    const auto& j = c.at("mbb");
    const Mbb m = make_mbb({j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()},
                           j.at("len_major").get<double>(), j.at("len_minor").get<double>(), j.at("angle").get<double>());
    for (const Chip& chip : augment(local, m, c.at("id").get<std::size_t>(), Label::Positive, AugmentPlan{}, 100))
      check(chip);
  }
  Chip constant;
  constant.size = 100;
  constant.pixels.assign(10000, 0.37);
  const Chip z = normalize(constant);
  const bool zeros = std::all_of(z.pixels.begin(), z.pixels.end(), [](double p) { return p == 0.0; });
  report(4, chips > 0 && worstMean <= 1e-9 && worstRange <= 1e-9 && zeros,
         fmt("%.0f chips (%.0f degenerate): max |mean| %.1e, max |range-1| %.1e", double(chips), double(degenerate),
             worstMean, worstRange) +
             "; constant chip -> zeros: " + (zeros ? "yes" : "no"));
}

// ---- 5: labeling boundary

void criterion_labeling() {
  const HouseRule rule;
  AnnotationPolygon house;
  house.id = "h";
  house.ring = {{7, 0}, {17, 0}, {17, 2}, {7, 2}, {7, 0}};
  house.areaSqM = 20;
  const auto out = label_candidates(std::vector{make_mbb({5, 1}, 10, 2, 0)}, std::vector{house}, rule);
  const bool geometric = out[0].label == Label::Positive;
  const bool atBoundary = rule.satisfied(0.3, 0.3);
  const bool below = !rule.satisfied(0.2999, 0.3);
  report(5, geometric && atBoundary && below,
         std::string("(0.3, 0.3) -> ") + (atBoundary ? "positive" : "negative") + "; (0.2999, 0.3) -> " +
             (below ? "negative" : "positive") +
             fmt("; 10x2 boxes sharing 3x2 (fractions %.4f, %.4f) -> ", out[0].overlapFracOfBox,
                 out[0].overlapFracOfHouse) +
             (geometric ? "positive" : "negative"));
}

// ---- 6: gradient check

void criterion_gradient() {
  std::mt19937_64 gen(1006);
  std::normal_distribution<double> n(0, 1);
  const std::size_t dims = 25 + GeomFeatures::kCount, rows = 120;
  std::vector<std::vector<double>> x(rows, std::vector<double>(dims));
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto& v : x[r]) v = n(gen);
    y[r] = double((r * 7) % 3 == 0);
  }
  const LogisticObjective obj(x, y, 1e-3);
  std::vector<double> params(obj.parameter_count());
  for (auto& p : params) p = 0.3 * n(gen);
  std::vector<double> grad(params.size());
  obj.loss_and_gradient(params, grad);
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  double worst = 0;
  const double h = 1e-5;
  for (int k = 0; k < 10; ++k) {
    const std::size_t c = pick(gen);
    auto plus = params, minus = params;
    plus[c] += h;
    minus[c] -= h;
    const double fd = (obj.loss(plus) - obj.loss(minus)) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[c]) / std::max({std::abs(fd), std::abs(grad[c]), 1e-8}));
  }
  report(6, worst <= 1e-4, fmt("max relative error over 10 coordinates %.2e (<=1e-4)", worst));
}

// ---- 7: fusion and threshold properties

void criterion_fusion(const fs::path& ws) {
  const auto records = read_scores_csv(ws / "score" / "scores.csv");
  bool ordered = !records.empty();
  for (const auto& r : records) ordered = ordered && r.pessimistic <= r.robust && r.robust <= r.optimistic;

  const EvalReport rep = evaluate(records, default_sigma_grid());
  bool monotone = true;
  for (const auto& m : rep.modes)
    for (std::size_t k = 1; k < m.points.size(); ++k)
      monotone = monotone && m.points[k].missed >= m.points[k - 1].missed &&
                 m.points[k].falseAlarm <= m.points[k - 1].falseAlarm;

  std::mt19937_64 gen(1007);
  std::uniform_int_distribution<std::size_t> n(0, 700);
  bool exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const ConfusionCounts c{n(gen), n(gen), n(gen), n(gen)};
    const double tp = double(c.tp), fp = double(c.fp), fn = double(c.fn);
    const double oracle = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    exact = exact && f1_score(c) == oracle;
  }
  report(7, ordered && monotone && exact,
         fmt("%.0f score records min<=median<=max: ", double(records.size())) + (ordered ? "yes" : "no") +
             "; DET monotone: " + (monotone ? "yes" : "no") + "; F1 exact on 100 matrices: " + (exact ? "yes" : "no"));
}

// ---- 8, 9: end-to-end synthetic site

void criterion_end_to_end(const fs::path& ws, double seconds) {
  const json label = json::parse(slurp(ws / "label" / "manifest.json"));
  const double eligible = label.at("eligible_houses").get<double>();
  const double matched = label.at("matched_houses").get<double>();
  const json summary = json::parse(slurp(ws / "eval" / "summary.json"));
  const double eer = summary.at("eer").at("robust").get<double>();
  const bool fiftyHouses = eligible == 50;
  const double frac = matched / eligible;
  report(8, fiftyHouses && frac >= 0.9 && eer <= 0.25 && seconds < 600,
         fmt("%.0f/%.0f planted houses with a positive candidate (%.2f, need >=0.90); robust EER %.3f (<=0.25); ",
             matched, eligible, frac, eer) +
             fmt("pipeline %.0f s (<600)", seconds));
}

void criterion_delta0(const fs::path& ws) {
  const fs::path csv = ws / "segment" / "delta0_curve.csv";
  const json cands = json::parse(slurp(ws / "segment" / "candidates.json"));
  const int chosen = cands.at("delta0").at("gray_level").get<int>();
  const int unconstrained = cands.at("delta0").at("unconstrained_gray_level").get<int>();
  std::vector<long> counts(256, -1);
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  const bool header = line == "level,count";
  while (std::getline(is, line)) {
    int level = 0;
    long count = 0;
    if (std::sscanf(line.c_str(), "%d,%ld", &level, &count) == 2 && level >= 0 && level < 256) counts[level] = count;
  }
  const bool complete = std::none_of(counts.begin(), counts.end(), [](long c) { return c < 0; });
  const long atMax = counts[std::size_t(chosen)];
  report(9, header && complete && counts[255] == 0 && atMax >= 40 && atMax <= 70,
         std::string("curve CSV with 256 levels: ") + (header && complete ? "yes" : "no") +
             fmt("; count(255) = %.0f; argmax level %.0f has %.0f candidates (need 40..70)", double(counts[255]),
                 double(chosen), double(atMax)) +
             fmt("; full-sweep argmax level %.0f has %.0f", double(unconstrained),
                 double(counts[std::size_t(unconstrained)])));
}

// ---- 10: determinism

void criterion_determinism(const fs::path& a, const fs::path& b) {
  std::vector<std::string> differing;
  for (const char* f : {"score/scores.csv", "eval/f1.csv", "eval/det.csv", "eval/summary.json", "eval/f1.svg",
                        "eval/det.svg"}) {
    const std::string x = slurp(a / f), y = slurp(b / f);
    if (x.empty() || x != y) differing.push_back(f);
  }
  std::string detail = "score and report files byte-identical across two runs";
  for (const auto& d : differing) detail += "; differs: " + d;
  report(10, differing.empty(), detail);
}

int run_pipeline_in(const fs::path& ws, int threads, double& seconds) {
  fs::remove_all(ws);
  const auto t0 = Clock::now();
  const int rc = run_cli({"pipeline", "--workspace", ws.string(), "--threads", std::to_string(threads)});
  seconds = seconds_since(t0);
  return rc;
}

}  // namespace

int main() {
  criterion_geometry();
  criterion_spectral();
  criterion_augmentation();
  criterion_labeling();
  criterion_gradient();

  const fs::path root = fs::temp_directory_path() / "ruinscan-acceptance";
  const int threads = int(std::max(1u, std::min(8u, std::thread::hardware_concurrency())));
  double first = 0, second = 0;
  const int rcA = run_pipeline_in(root / "run-a", threads, first);
  if (rcA != 0) {
    report(8, false, fmt("pipeline exited with status %.0f", rcA));
  } else {
    criterion_normalization(root / "run-a");
    criterion_fusion(root / "run-a");
    criterion_end_to_end(root / "run-a", first);
    criterion_delta0(root / "run-a");
    const int rcB = run_pipeline_in(root / "run-b", std::max(1, threads / 2), second);
    if (rcB != 0) report(10, false, fmt("second pipeline exited with status %.0f", rcB));
    else criterion_determinism(root / "run-a", root / "run-b");
  }
  std::printf("acceptance: %d failing criteria\n", failures);
  return failures == 0 ? 0 : 1;
}
