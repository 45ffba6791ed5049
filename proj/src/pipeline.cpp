#include "ruinscan/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "ruinscan/error.hpp"
#include "ruinscan/ingest.hpp"
#include "text.hpp"

namespace ruinscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One key=value log line per event on stderr.
class StageLog {
 public:
  explicit StageLog(std::string stage) : stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}

  template <typename... Fields>
  void event(const std::string& name, const Fields&... fields) const {
    std::string line = "ruinscan stage=" + stage_ + " event=" + name;
    (append(line, fields), ...);
    std::fprintf(stderr, "%s\n", line.c_str());
  }

  void done() const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    event("done", std::pair{"seconds", detail::fmt(secs, 3)});
  }

 private:
  template <typename V>
  static void append(std::string& line, const std::pair<const char*, V>& kv) {
    line += " ";
    line += kv.first;
    line += "=";
    if constexpr (std::is_arithmetic_v<V>) {
      if constexpr (std::is_floating_point_v<V>) line += detail::fmt(kv.second, 4);
      else line += std::to_string(kv.second);
    } else {
      line += kv.second;
    }
  }

  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

template <typename V>
std::pair<const char*, V> kv(const char* key, V value) {
  return {key, value};
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("missing artifact " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(1) << "\n";
}

fs::path stage_dir(const RunContext& ctx, const std::string& stage) {
  const fs::path dir = ctx.workspace / stage;
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const RunContext& ctx, const std::string& stage, json extra = json::object()) {
  extra["stage"] = stage;
  extra["config_hash"] = ctx.config.stage_hash(stage);
  write_json(extra, ctx.workspace / stage / "manifest.json");
}

// Verifies that `stage` ran with the configuration now in effect.
json require_stage(const RunContext& ctx, const std::string& stage) {
  const fs::path path = ctx.workspace / stage / "manifest.json";
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing artifact " + path.string() + " (run the '" + stage + "' stage first)");
  }
  const json m = read_json(path);
  const std::string expected = ctx.config.stage_hash(stage);
  const std::string found = m.value("config_hash", "");
  if (found != expected) {
    throw ValidationError("config hash mismatch for stage '" + stage + "': artifacts were produced with " + found +
                          ", current configuration gives " + expected);
  }
  return m;
}

fs::path input_xyz(const RunContext& ctx) {
  const std::string& p = ctx.config.get("input.xyz");
  return p.empty() ? ctx.workspace / "synth" / "site.xyz" : fs::path(p);
}

fs::path input_annotations(const RunContext& ctx) {
  const std::string& p = ctx.config.get("input.annotations");
  return p.empty() ? ctx.workspace / "synth" / "annotations.geojson" : fs::path(p);
}

json mbb_json(const Mbb& m) {
  return {{"center", {m.center.x, m.center.y}}, {"len_major", m.lenMajor}, {"len_minor", m.lenMinor}, {"angle", m.angle}};
}

Mbb mbb_from_json(const json& j) {
  Mbb m;
  m.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
  m.lenMajor = j.at("len_major").get<double>();
  m.lenMinor = j.at("len_minor").get<double>();
  m.angle = j.at("angle").get<double>();
  return m;
}

json ring_json(std::span<const Vec2> pts) {
  json ring = json::array();
  for (const Vec2& p : pts) ring.push_back({p.x, p.y});
  return ring;
}

struct CandidateRecord {
  std::size_t id = 0;
  Mbb mbb;
  GeomFeatures geom;
};

std::vector<CandidateRecord> read_candidates(const RunContext& ctx) {
  const json j = read_json(ctx.workspace / "segment" / "candidates.json");
  std::vector<CandidateRecord> out;
  try {
    for (const auto& c : j.at("candidates")) {
      CandidateRecord r;
      r.id = c.at("id").get<std::size_t>();
      r.mbb = mbb_from_json(c.at("mbb"));
      const auto& g = c.at("geom");
      r.geom.areaSqM = g.at("area").get<double>();
      r.geom.circumferenceM = g.at("circumference").get<double>();
      r.geom.aspect = g.at("aspect").get<double>();
      r.geom.fillRatio = g.at("fill_ratio").get<double>();
      r.geom.contourCount = g.at("contour_count").get<double>();
      out.push_back(r);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed candidates.json: ") + e.what());
  }
  return out;
}

Raster read_local_dem(const RunContext& ctx) { return read_raster(ctx.workspace / "localize" / "local_dem"); }

}  // namespace

void run_synth(const RunContext& ctx) {
  StageLog log("synth");
  const SiteSpec spec = ctx.config.site_spec();
  const SyntheticSite site = generate_site(spec);
  write_site(site, spec, stage_dir(ctx, "synth"));
  write_manifest(ctx, "synth", {{"houses", site.houses.size()}, {"returns", site.cloud.records.size()}});
  log.event("site", kv("houses", site.houses.size()), kv("shrubs", site.shrubs.size()),
            kv("returns", site.cloud.records.size()), kv("spike_returns", site.spikeReturns));
  log.done();
}

void run_grid(const RunContext& ctx) {
  StageLog log("grid");
  if (ctx.config.get("input.xyz").empty()) require_stage(ctx, "synth");
  const PointCloud cloud = load_xyz(input_xyz(ctx));
  const auto ground = reduce_to_ground(cloud, ctx.config.eps_xy());
  const Raster dem = grid_nearest(ground, ctx.config.resolution(), ctx.config.max_search(), ctx.threads);
  write_raster(dem, stage_dir(ctx, "grid") / "dem");
  write_manifest(ctx, "grid");
  log.event("dem", kv("records", cloud.records.size()), kv("ground_points", ground.size()), kv("width", dem.width),
            kv("height", dem.height), kv("valid_pixels", dem.valid_count()));
  log.done();
}

void run_localize(const RunContext& ctx) {
  StageLog log("localize");
  require_stage(ctx, "grid");
  const Raster dem = read_raster(ctx.workspace / "grid" / "dem");
  const Raster local = localize(dem, ctx.config.localize_params());
  const fs::path dir = stage_dir(ctx, "localize");
  write_raster(local, dir / "local_dem");
  write_pgm(to_grayscale(local), dir / "local_dem.pgm");
  const ValueRange r = valid_range(local);
  write_manifest(ctx, "localize");
  log.event("local_dem", kv("min_m", r.min), kv("max_m", r.max));
  log.done();
}

void run_segment(const RunContext& ctx) {
  StageLog log("segment");
  require_stage(ctx, "localize");
  const Raster local = read_local_dem(ctx);
  const fs::path dir = stage_dir(ctx, "segment");
  const Config& cfg = ctx.config;

  double level = cfg.get_double("delta0.meters");
  json tuneInfo = {{"mode", cfg.get("delta0.mode")}};
  if (cfg.delta0_mode() == Delta0Mode::Auto) {
    const TuneResult tune = tune_delta0(local, cfg.tune_options(ctx.threads));
    write_tune_curve_csv(tune, dir / "delta0_curve.csv");
    level = tune.delta0Meters;
    tuneInfo["gray_level"] = tune.delta0Gray;
    tuneInfo["unconstrained_gray_level"] = tune.unconstrainedArgmax;
    tuneInfo["noise_sigma"] = tune.noiseSigma;
    tuneInfo["floor_meters"] = tune.floorMeters;
    log.event("delta0", kv("mode", std::string("auto")), kv("gray_level", tune.delta0Gray),
              kv("meters", tune.delta0Meters), kv("count", tune.curve[std::size_t(tune.delta0Gray)].second),
              kv("unconstrained_gray_level", tune.unconstrainedArgmax),
              kv("unconstrained_count", tune.curve[std::size_t(tune.unconstrainedArgmax)].second),
              kv("noise_floor_m", tune.floorMeters));
  } else {
    log.event("delta0", kv("mode", std::string("meters")), kv("meters", level));
  }
  tuneInfo["meters"] = level;

  const SegmentationResult seg = segment_at_level(local, level, cfg.prefilter_rules(), cfg.mbb_mode());

  json contours = {{"type", "FeatureCollection"}, {"features", json::array()}};
  for (const Contour& c : seg.reduced) {
    contours["features"].push_back({{"type", "Feature"},
                                    {"properties", {{"level", c.level}, {"area", std::abs(c.area())}}},
                                    {"geometry", {{"type", "LineString"}, {"coordinates", ring_json(c.vertices)}}}});
  }
  write_json(contours, dir / "contours.geojson");

  json boxes = {{"type", "FeatureCollection"}, {"features", json::array()}};
  json candidates = json::array();
  for (std::size_t k = 0; k < seg.segments.size(); ++k) {
    const Mbb& m = seg.segments[k].mbb;
    auto corners = m.corners();
    std::vector<Vec2> ring(corners.begin(), corners.end());
    ring.push_back(ring.front());
    boxes["features"].push_back({{"type", "Feature"},
                                 {"properties",
                                  {{"id", k},
                                   {"level", level},
                                   {"area", m.area()},
                                   {"circumference", m.circumference()},
                                   {"aspect", m.aspect()},
                                   {"angle", m.angle}}},
                                 {"geometry", {{"type", "Polygon"}, {"coordinates", {ring_json(ring)}}}}});
    const GeomFeatures g = extract_geom_features(seg.segments[k], seg.reduced);
    candidates.push_back({{"id", k},
                          {"mbb", mbb_json(m)},
                          {"geom",
                           {{"area", g.areaSqM},
                            {"circumference", g.circumferenceM},
                            {"aspect", g.aspect},
                            {"fill_ratio", g.fillRatio},
                            {"contour_count", g.contourCount}}}});
  }
  write_json(boxes, dir / "mbbs.geojson");
  write_json({{"delta0", tuneInfo}, {"candidates", candidates}}, dir / "candidates.json");
  write_manifest(ctx, "segment", {{"delta0", tuneInfo}, {"candidates", seg.segments.size()}});
  log.event("P1", kv("contours", seg.contoursExtracted), kv("reduced", seg.reduced.size()),
            kv("degenerate", seg.degenerateSkipped), kv("candidates_after_prefilter", seg.segments.size()));
  log.done();
}

void run_label(const RunContext& ctx) {
  StageLog log("label");
  require_stage(ctx, "segment");
  if (ctx.config.get("input.annotations").empty()) require_stage(ctx, "synth");
  const auto candidates = read_candidates(ctx);
  const AnnotationSet annotations = load_annotations(input_annotations(ctx));
  for (const auto& w : annotations.warnings) log.event("warning", kv("message", "\"" + w + "\""));

  const HouseRule rule = ctx.config.house_rule();
  const auto houses = eligible_houses(annotations.polygons, rule);
  std::vector<Mbb> mbbs;
  for (const auto& c : candidates) mbbs.push_back(c.mbb);
  const auto labeled = label_candidates(mbbs, houses, rule);
  const auto unmatched = unmatched_annotations(labeled, houses);
  const Split parts = split(labeled, ctx.config.split_spec());

  const fs::path dir = stage_dir(ctx, "label");
  {
    std::ofstream os(dir / "labels.csv");
    if (!os) throw IoError("cannot write labels.csv");
    os << "candidate_id,label,matched_annotation,frac_box,frac_house,area,circumference,aspect\n";
    for (std::size_t k = 0; k < labeled.size(); ++k) {
      const auto& l = labeled[k];
      os << candidates[k].id << "," << (l.label == Label::Positive ? 1 : 0) << "," << l.matchedAnnotationId.value_or("")
         << "," << detail::fmt(l.overlapFracOfBox, 6) << "," << detail::fmt(l.overlapFracOfHouse, 6) << ","
         << detail::fmt(l.mbb.area(), 4) << "," << detail::fmt(l.mbb.circumference(), 4) << ","
         << detail::fmt(l.mbb.aspect(), 4) << "\n";
    }
  }
  auto ids = [&](const std::vector<std::size_t>& idx) {
    json a = json::array();
    for (std::size_t i : idx) a.push_back(candidates[i].id);
    return a;
  };
  write_json({{"train_pos", ids(parts.trainPos)},
              {"train_neg", ids(parts.trainNeg)},
              {"test_pos", ids(parts.testPos)},
              {"test_neg", ids(parts.testNeg)},
              {"unmatched_houses", unmatched}},
             dir / "split.json");
  const std::size_t positives = parts.trainPos.size() + parts.testPos.size();
  write_manifest(ctx, "label",
                 {{"eligible_houses", houses.size()},
                  {"matched_houses", houses.size() - unmatched.size()},
                  {"positives", positives},
                  {"negatives", labeled.size() - positives}});
  log.event("P2", kv("candidates", labeled.size()), kv("positives", positives),
            kv("negatives", labeled.size() - positives), kv("eligible_houses", houses.size()),
            kv("matched_houses", houses.size() - unmatched.size()));
  log.event("split", kv("train_pos", parts.trainPos.size()), kv("train_neg", parts.trainNeg.size()),
            kv("test_pos", parts.testPos.size()), kv("test_neg", parts.testNeg.size()));
  log.done();
}

namespace {

std::string chip_id(std::size_t candidate, int n, int m) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "c%05zu_n%d_m%d", candidate, n, m);
  return buf;
}

std::vector<std::size_t> id_list(const json& j, const char* key) {
  try {
    return j.at(key).get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed split.json: ") + e.what());
  }
}

}  // namespace

void run_chips(const RunContext& ctx) {
  StageLog log("chips");
  require_stage(ctx, "label");
  const Raster local = read_local_dem(ctx);
  const auto candidates = read_candidates(ctx);
  const json parts = read_json(ctx.workspace / "label" / "split.json");
  const AugmentPlan plan = ctx.config.augment_plan();
  const int size = ctx.config.chip_size();

  const fs::path dir = stage_dir(ctx, "chips");
  const fs::path data = dir / "data";
  fs::remove_all(data);
  fs::create_directories(data);

  std::vector<ChipEntry> index;
  std::size_t augmentedPos = 0, augmentedNeg = 0;
  auto emit = [&](const Chip& chip, Label label, const char* part) {
    ChipEntry e{chip_id(chip.sourceCandidateId, chip.widenStep, chip.rotation), chip.sourceCandidateId,
                chip.widenStep, chip.rotation, label, part};
    write_chip(chip, data / (e.chipId + ".f32"));
    index.push_back(e);
  };
  auto lookup = [&](std::size_t id) -> const CandidateRecord& {
    if (id >= candidates.size() || candidates[id].id != id) {
      throw ValidationError("split.json references unknown candidate " + std::to_string(id));
    }
    return candidates[id];
  };

  for (const auto& [key, label] : {std::pair{"train_pos", Label::Positive}, std::pair{"train_neg", Label::Negative}}) {
    for (std::size_t id : id_list(parts, key)) {
      for (const Chip& chip : augment(local, lookup(id).mbb, id, label, plan, size)) {
        emit(chip, label, "train");
        (label == Label::Positive ? augmentedPos : augmentedNeg)++;
      }
    }
  }
  std::size_t testChips = 0;
  for (const auto& [key, label] : {std::pair{"test_pos", Label::Positive}, std::pair{"test_neg", Label::Negative}}) {
    for (std::size_t id : id_list(parts, key)) {
      emit(test_chip(local, lookup(id).mbb, id, size), label, "test");
      ++testChips;
    }
  }
  write_chip_index(index, dir / "index.csv");
  write_manifest(ctx, "chips", {{"chips", index.size()}});
  log.event("P3_P4_P5", kv("train_positive_chips", augmentedPos), kv("train_negative_chips", augmentedNeg),
            kv("test_chips", testChips));
  log.done();
}

namespace {

std::vector<Sample> load_samples(const RunContext& ctx, const std::string& part, bool withPixels) {
  const auto candidates = read_candidates(ctx);
  const auto index = read_chip_index(ctx.workspace / "chips" / "index.csv");
  const int size = ctx.config.chip_size();
  std::vector<Sample> out;
  for (const ChipEntry& e : index) {
    if (e.split != part) continue;
    if (e.candidateId >= candidates.size()) {
      throw ValidationError("chip index references unknown candidate " + std::to_string(e.candidateId));
    }
    Sample s;
    s.candidateId = e.candidateId;
    s.chipSize = size;
    s.geom = candidates[e.candidateId].geom;
    s.label = e.label;
    if (withPixels) s.pixels = read_chip(ctx.workspace / "chips" / "data" / (e.chipId + ".f32"), size).pixels;
    out.push_back(std::move(s));
  }
  return out;
}

// One sample per candidate: the geometry-only baseline ignores augmentation.
std::vector<Sample> unique_candidates(std::vector<Sample> samples) {
  std::vector<Sample> out;
  std::set<std::size_t> seen;
  for (auto& s : samples) {
    if (seen.insert(s.candidateId).second) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void run_train(const RunContext& ctx) {
  StageLog log("train");
  require_stage(ctx, "chips");
  const fs::path dir = stage_dir(ctx, "train");
  const ScorerSpec spec = ctx.config.scorer_spec();
  const EnsembleSpec ens = ctx.config.ensemble_spec();
  json extra = json::object();

  if (spec.kind == ScorerKind::ReferenceLinear) {
    const auto samples = load_samples(ctx, "train", spec.inputDownsample > 0);
    const auto models = train_ensemble(samples, spec, ens, ctx.threads);
    write_models(models, spec, ens, dir / "models.json");
    log.event("ensemble", kv("models", models.size()), kv("training_chips", samples.size()));
  } else {
    log.event("ensemble", kv("scorer", std::string("external")));
  }

  const auto trainGeo = unique_candidates(load_samples(ctx, "train", false));
  const auto testGeo = unique_candidates(load_samples(ctx, "test", false));
  const LinearModel baseline = train_feature_baseline(trainGeo, spec);
  std::vector<double> s;
  std::vector<Label> y;
  for (const auto& t : testGeo) {
    s.push_back(baseline.score(t));
    y.push_back(t.label);
  }
  const double auc = roc_auc(s, y);
  write_json({{"features", {"area", "circumference", "aspect", "fill_ratio", "contour_count"}},
              {"model", baseline.to_json()},
              {"test_roc_auc", auc}},
             dir / "baseline.json");
  extra["baseline_roc_auc"] = auc;
  write_manifest(ctx, "train", extra);
  log.event("baseline", kv("test_roc_auc", auc));
  log.done();
}

void run_score(const RunContext& ctx) {
  StageLog log("score");
  require_stage(ctx, "train");
  const ScorerSpec spec = ctx.config.scorer_spec();
  std::vector<ScoreRecord> records;
  if (spec.kind == ScorerKind::ReferenceLinear) {
    const auto models = read_models(ctx.workspace / "train" / "models.json");
    const bool pixels = !models.empty() && models.front().downsample() > 0;
    records = score(models, load_samples(ctx, "test", pixels));
  } else {
    records = score_external(read_external_scores(ctx.config.get("model.external_scores")),
                             load_samples(ctx, "test", false));
  }
  write_scores_csv(records, stage_dir(ctx, "score") / "scores.csv");
  write_manifest(ctx, "score", {{"scored", records.size()}});
  log.event("scores", kv("candidates", records.size()));
  log.done();
}

void run_eval(const RunContext& ctx) {
  StageLog log("eval");
  require_stage(ctx, "score");
  const auto records = read_scores_csv(ctx.workspace / "score" / "scores.csv");
  const EvalReport report = evaluate(records, ctx.config.sigma_grid());
  emit_report(report, stage_dir(ctx, "eval"));
  write_manifest(ctx, "eval");
  for (const auto& m : report.modes) {
    log.event("report", kv("mode", std::string(to_string(m.mode))), kv("eer", m.eer), kv("best_f1", m.bestF1),
              kv("best_f1_sigma", m.bestF1Sigma));
  }
  log.done();
}

void run_pipeline(const RunContext& ctx) {
  if (ctx.config.get("input.xyz").empty()) run_synth(ctx);
  run_grid(ctx);
  run_localize(ctx);
  run_segment(ctx);
  run_label(ctx);
  run_chips(ctx);
  run_train(ctx);
  run_score(ctx);
  run_eval(ctx);
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"ruinscan: LiDAR point clouds to ranked house-ruin candidates"};
  app.set_help_flag("-h,--help");
  std::string subcommand;
  std::string workspace;
  std::string configPath;
  std::vector<std::string> overrides;
  int threads = 1;
  std::optional<std::int64_t> seed;

  std::vector<std::string> choices = stage_names();
  choices.push_back("pipeline");
  app.add_option("subcommand", subcommand, "stage to run")->required()->check(CLI::IsMember(choices));
  app.add_option("-w,--workspace", workspace, "workspace directory (default: $RUINSCAN_WORKSPACE or ./workspace)");
  app.add_option("-c,--config", configPath, "key = value configuration file");
  app.add_option("-s,--set", overrides, "override one key, key=value")->allow_extra_args(false);
  app.add_option("-t,--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "global seed override");

  std::vector<std::string> argv;
  argv.push_back("ruinscan");
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(int(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : int(ErrorKind::Validation);
  }

  try {
    RunContext ctx;
    if (!configPath.empty()) ctx.config.merge_file(configPath);
    for (const auto& o : overrides) ctx.config.set_assignment(o);
    if (seed) ctx.config.set("seed", std::to_string(*seed));
    ctx.config.validate();
    if (workspace.empty()) {
      const char* env = std::getenv("RUINSCAN_WORKSPACE");
      workspace = env && *env ? env : "workspace";
    }
    ctx.workspace = workspace;
    ctx.threads = threads;
    fs::create_directories(ctx.workspace);

    if (subcommand == "pipeline") run_pipeline(ctx);
    else if (subcommand == "synth") run_synth(ctx);
    else if (subcommand == "grid") run_grid(ctx);
    else if (subcommand == "localize") run_localize(ctx);
    else if (subcommand == "segment") run_segment(ctx);
    else if (subcommand == "label") run_label(ctx);
    else if (subcommand == "chips") run_chips(ctx);
    else if (subcommand == "train") run_train(ctx);
    else if (subcommand == "score") run_score(ctx);
    else if (subcommand == "eval") run_eval(ctx);
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "ruinscan error=%s message=\"%s\"\n",
                 e.kind() == ErrorKind::Validation        ? "validation"
                 : e.kind() == ErrorKind::MissingArtifact ? "missing_artifact"
                                                          : "runtime",
                 e.what());
    return int(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ruinscan error=runtime message=\"%s\"\n", e.what());
    return int(ErrorKind::Runtime);
  }
}

}  // namespace ruinscan
