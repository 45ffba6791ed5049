#include "ruinscan/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ruinscan/error.hpp"

namespace ruinscan {

namespace {

enum class Kind { Double, Int, Bool, String, Doubles, Choice };

struct KeySpec {
  const char* key;
  const char* stage;
  Kind kind;
  const char* defaultValue;
  std::vector<std::string> choices = {};
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      {"seed", "synth", Kind::Int, "0"},
      {"synth.extent_x", "synth", Kind::Double, "500"},
      {"synth.extent_y", "synth", Kind::Double, "500"},
      {"synth.density", "synth", Kind::Double, "11.1"},
      {"synth.jitter", "synth", Kind::Double, "0"},
      {"synth.houses", "synth", Kind::Int, "50"},
      {"synth.side_min", "synth", Kind::Double, "4.5"},
      {"synth.side_max", "synth", Kind::Double, "8.0"},
      {"synth.min_footprint", "synth", Kind::Double, "20"},
      {"synth.wall_height_min", "synth", Kind::Double, "0.4"},
      {"synth.wall_height_max", "synth", Kind::Double, "0.5"},
      {"synth.wall_thickness", "synth", Kind::Double, "0.5"},
      {"synth.entrance_prob", "synth", Kind::Double, "0.3"},
      {"synth.entrance_width", "synth", Kind::Double, "1.0"},
      {"synth.house_spacing", "synth", Kind::Double, "4"},
      {"synth.terrain_amplitudes", "synth", Kind::Doubles, "2.0,1.5"},
      {"synth.terrain_wavelengths", "synth", Kind::Doubles, "60,45"},
      {"synth.terrain_directions", "synth", Kind::Doubles, "0.3,1.9"},
      {"synth.terrain_phases", "synth", Kind::Doubles, "0,1"},
      {"synth.spike_rate", "synth", Kind::Double, "0.05"},
      {"synth.spike_height_min", "synth", Kind::Double, "2"},
      {"synth.spike_height_max", "synth", Kind::Double, "15"},
      {"synth.shrubs", "synth", Kind::Int, "12"},
      {"synth.shrub_radius_min", "synth", Kind::Double, "1.2"},
      {"synth.shrub_radius_max", "synth", Kind::Double, "2.2"},
      {"synth.shrub_height_min", "synth", Kind::Double, "0.4"},
      {"synth.shrub_height_max", "synth", Kind::Double, "1.0"},
      {"synth.shrub_density", "synth", Kind::Double, "30"},
      {"synth.noise_sigma", "synth", Kind::Double, "0.05"},
      {"input.xyz", "grid", Kind::String, ""},
      {"grid.resolution", "grid", Kind::Double, "0.3"},
      {"grid.max_search", "grid", Kind::Double, "3.0"},
      {"grid.eps_xy", "grid", Kind::Double, "1e-6"},
      {"localize.lambda", "localize", Kind::Double, "3.0"},
      {"localize.rolloff", "localize", Kind::Choice, "gaussian", {"gaussian", "ideal"}},
      {"delta0.mode", "segment", Kind::Choice, "auto", {"auto", "meters"}},
      {"delta0.meters", "segment", Kind::Double, "0.25"},
      {"delta0.constrain", "segment", Kind::Bool, "false"},
      {"delta0.noise_floor", "segment", Kind::Double, "3"},
      {"delta0.range_min", "segment", Kind::Double, "0.2"},
      {"delta0.range_max", "segment", Kind::Double, "0.5"},
      {"segment.mbb_mode", "segment", Kind::Choice, "min_area", {"min_area", "axis_aligned"}},
      {"prefilter.min_area", "segment", Kind::Double, "3"},
      {"prefilter.max_aspect", "segment", Kind::Double, "10"},
      {"prefilter.min_circumference", "segment", Kind::Double, "10"},
      {"prefilter.max_circumference", "segment", Kind::Double, "200"},
      {"input.annotations", "label", Kind::String, ""},
      {"label.a1", "label", Kind::Double, "0.3"},
      {"label.a2", "label", Kind::Double, "0.3"},
      {"label.min_house_area", "label", Kind::Double, "20"},
      {"split.train_frac_pos", "label", Kind::Double, "0.7"},
      {"split.train_frac_neg", "label", Kind::Double, "0.6"},
      {"chips.size", "chips", Kind::Int, "100"},
      {"chips.widen_steps", "chips", Kind::Doubles, "0,0.333333333333,0.666666666667,1,1.333333333333,1.666666666667"},
      {"chips.rotations", "chips", Kind::Int, "4"},
      {"chips.augment_negatives", "chips", Kind::Bool, "false"},
      {"model.kind", "train", Kind::Choice, "reference", {"reference", "external"}},
      {"model.external_scores", "train", Kind::String, ""},
      {"model.downsample", "train", Kind::Int, "20"},
      {"model.learning_rate", "train", Kind::Double, "0.5"},
      {"model.epochs", "train", Kind::Int, "300"},
      {"model.l2", "train", Kind::Double, "0.001"},
      {"ensemble.q", "train", Kind::Int, "10"},
      {"ensemble.subsample", "train", Kind::Double, "0.9"},
      {"eval.sigma_step", "eval", Kind::Double, "0.01"},
  };
  return keys;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : schema()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes") return out = true, true;
  if (s == "false" || s == "0" || s == "no") return out = false, true;
  return false;
}

bool parse_doubles(const std::string& s, std::vector<double>& out) {
  out.clear();
  if (s.empty()) return true;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v;
    if (!parse_double(trim(item), v)) return false;
    out.push_back(v);
  }
  return true;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ValidationError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

void check_value(const KeySpec& spec, const std::string& value) {
  double d;
  std::int64_t i;
  bool b;
  std::vector<double> v;
  switch (spec.kind) {
    case Kind::Double: if (!parse_double(value, d)) bad_value(spec.key, value, "a number"); break;
    case Kind::Int: if (!parse_int(value, i)) bad_value(spec.key, value, "an integer"); break;
    case Kind::Bool: if (!parse_bool(value, b)) bad_value(spec.key, value, "true or false"); break;
    case Kind::Doubles: if (!parse_doubles(value, v)) bad_value(spec.key, value, "comma-separated numbers"); break;
    case Kind::Choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
        std::string options;
        for (const auto& c : spec.choices) options += (options.empty() ? "" : " | ") + c;
        bad_value(spec.key, value, options.c_str());
      }
      break;
    case Kind::String: break;
  }
}

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth", "grid",  "localize", "segment", "label",
                                                 "chips", "train", "score",    "eval"};
  return names;
}

Config::Config() {
  for (const auto& k : schema()) values_[k.key] = k.defaultValue;
}

Config Config::load(const std::filesystem::path& path) {
  Config c;
  c.merge_file(path);
  return c;
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("missing config file " + path.string());
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(is, line)) {
    ++lineNo;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(path.string() + " line " + std::to_string(lineNo) + ": expected key = value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ValidationError("unknown config key '" + key + "'");
  check_value(*spec, value);
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  double v;
  if (!parse_double(get(key), v)) bad_value(key, get(key), "a number");
  return v;
}

std::int64_t Config::get_int(const std::string& key) const {
  std::int64_t v;
  if (!parse_int(get(key), v)) bad_value(key, get(key), "an integer");
  return v;
}

bool Config::get_bool(const std::string& key) const {
  bool v;
  if (!parse_bool(get(key), v)) bad_value(key, get(key), "true or false");
  return v;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> v;
  if (!parse_doubles(get(key), v)) bad_value(key, get(key), "comma-separated numbers");
  return v;
}

void Config::validate() const {
  site_spec().validate();
  if (!(resolution() > 0)) throw ValidationError("config key 'grid.resolution' must be positive");
  if (!(max_search() > 0)) throw ValidationError("config key 'grid.max_search' must be positive");
  if (!(eps_xy() > 0)) throw ValidationError("config key 'grid.eps_xy' must be positive");
  if (!(localize_params().lambdaMeters > 2 * resolution())) {
    throw ValidationError("config key 'localize.lambda' must exceed twice the grid resolution");
  }
  const double lo = get_double("delta0.range_min"), hi = get_double("delta0.range_max");
  if (!(get_double("delta0.noise_floor") >= 0)) throw ValidationError("config key 'delta0.noise_floor' must be non-negative");
  if (!(lo >= 0 && hi > lo)) throw ValidationError("config keys 'delta0.range_min/max' must satisfy 0 <= min < max");
  if (delta0_mode() == Delta0Mode::Meters) {
    const double m = get_double("delta0.meters");
    if (!(m >= lo && m <= hi)) {
      throw ValidationError("config key 'delta0.meters' must lie in [" + get("delta0.range_min") + ", " +
                            get("delta0.range_max") + "]");
    }
  }
  prefilter_rules().validate();
  house_rule().validate();
  const SplitSpec s = split_spec();
  if (!(s.trainFracPos > 0 && s.trainFracPos < 1 && s.trainFracNeg > 0 && s.trainFracNeg < 1)) {
    throw ValidationError("config keys 'split.train_frac_*' must lie in (0, 1)");
  }
  augment_plan().validate();
  if (chip_size() < 8) throw ValidationError("config key 'chips.size' must be at least 8");
  scorer_spec().validate(chip_size());
  if (scorer_spec().kind == ScorerKind::External && get("model.external_scores").empty()) {
    throw ValidationError("config key 'model.external_scores' is required when model.kind = external");
  }
  ensemble_spec().validate();
  const double step = get_double("eval.sigma_step");
  if (!(step > 0 && step <= 1)) throw ValidationError("config key 'eval.sigma_step' must lie in (0, 1]");
}

std::string Config::stage_hash(const std::string& stage) const {
  const auto& names = stage_names();
  const auto it = std::find(names.begin(), names.end(), stage);
  if (it == names.end()) throw ValidationError("unknown stage '" + stage + "'");
  const std::size_t upto = std::size_t(it - names.begin());
  std::string text;
  for (const auto& k : schema()) {
    const auto owner = std::find(names.begin(), names.end(), std::string(k.stage));
    if (std::size_t(owner - names.begin()) <= upto) text += std::string(k.key) + "=" + get(k.key) + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

SiteSpec Config::site_spec() const {
  SiteSpec s;
  s.extentX = get_double("synth.extent_x");
  s.extentY = get_double("synth.extent_y");
  s.pointDensity = get_double("synth.density");
  s.positionJitter = get_double("synth.jitter");
  s.houses = int(get_int("synth.houses"));
  s.sideMin = get_double("synth.side_min");
  s.sideMax = get_double("synth.side_max");
  s.minFootprintSqM = get_double("synth.min_footprint");
  s.wallHeightMin = get_double("synth.wall_height_min");
  s.wallHeightMax = get_double("synth.wall_height_max");
  s.wallThickness = get_double("synth.wall_thickness");
  s.entranceProb = get_double("synth.entrance_prob");
  s.entranceWidth = get_double("synth.entrance_width");
  s.houseSpacing = get_double("synth.house_spacing");
  const auto amp = get_doubles("synth.terrain_amplitudes");
  const auto wl = get_doubles("synth.terrain_wavelengths");
  const auto dir = get_doubles("synth.terrain_directions");
  const auto ph = get_doubles("synth.terrain_phases");
  if (wl.size() != amp.size() || dir.size() != amp.size() || ph.size() != amp.size()) {
    throw ValidationError("config keys 'synth.terrain_*' must list the same number of components");
  }
  s.terrain.clear();
  for (std::size_t k = 0; k < amp.size(); ++k) s.terrain.push_back({amp[k], wl[k], dir[k], ph[k]});
  s.lambdaM = get_double("localize.lambda");
  s.vegetationSpikeRate = get_double("synth.spike_rate");
  s.spikeHeightMin = get_double("synth.spike_height_min");
  s.spikeHeightMax = get_double("synth.spike_height_max");
  s.shrubs = int(get_int("synth.shrubs"));
  s.shrubRadiusMin = get_double("synth.shrub_radius_min");
  s.shrubRadiusMax = get_double("synth.shrub_radius_max");
  s.shrubHeightMin = get_double("synth.shrub_height_min");
  s.shrubHeightMax = get_double("synth.shrub_height_max");
  s.shrubReturnDensity = get_double("synth.shrub_density");
  s.noiseSigmaM = get_double("synth.noise_sigma");
  s.seed = std::uint64_t(get_int("seed"));
  return s;
}

double Config::resolution() const { return get_double("grid.resolution"); }
double Config::max_search() const { return get_double("grid.max_search"); }
double Config::eps_xy() const { return get_double("grid.eps_xy"); }

LocalizeParams Config::localize_params() const {
  LocalizeParams p;
  p.lambdaMeters = get_double("localize.lambda");
  p.rolloff = get("localize.rolloff") == "ideal" ? Rolloff::Ideal : Rolloff::Gaussian;
  return p;
}

Delta0Mode Config::delta0_mode() const { return get("delta0.mode") == "meters" ? Delta0Mode::Meters : Delta0Mode::Auto; }

TuneOptions Config::tune_options(int threads) const {
  TuneOptions t;
  t.rules = prefilter_rules();
  t.mode = mbb_mode();
  if (get_bool("delta0.constrain")) t.meterRange = std::make_pair(get_double("delta0.range_min"), get_double("delta0.range_max"));
  t.noiseFloorSigmas = get_double("delta0.noise_floor");
  t.threads = threads;
  return t;
}

PrefilterRules Config::prefilter_rules() const {
  PrefilterRules r;
  r.minAreaSqM = get_double("prefilter.min_area");
  r.maxAspect = get_double("prefilter.max_aspect");
  r.minCircumferenceM = get_double("prefilter.min_circumference");
  r.maxCircumferenceM = get_double("prefilter.max_circumference");
  return r;
}

MbbMode Config::mbb_mode() const {
  return get("segment.mbb_mode") == "axis_aligned" ? MbbMode::AxisAligned : MbbMode::MinimumArea;
}

HouseRule Config::house_rule() const {
  HouseRule h;
  h.a1 = get_double("label.a1");
  h.a2 = get_double("label.a2");
  h.minHouseAreaSqM = get_double("label.min_house_area");
  return h;
}

SplitSpec Config::split_spec() const {
  SplitSpec s;
  s.trainFracPos = get_double("split.train_frac_pos");
  s.trainFracNeg = get_double("split.train_frac_neg");
  s.seed = std::uint64_t(get_int("seed"));
  return s;
}

AugmentPlan Config::augment_plan() const {
  AugmentPlan p;
  p.widenSteps = get_doubles("chips.widen_steps");
  p.rotations = int(get_int("chips.rotations"));
  p.widenRotatePositives = true;
  p.widenRotateNegatives = get_bool("chips.augment_negatives");
  return p;
}

int Config::chip_size() const { return int(get_int("chips.size")); }

ScorerSpec Config::scorer_spec() const {
  ScorerSpec s;
  s.kind = get("model.kind") == "external" ? ScorerKind::External : ScorerKind::ReferenceLinear;
  s.inputDownsample = int(get_int("model.downsample"));
  s.learningRate = get_double("model.learning_rate");
  s.epochs = int(get_int("model.epochs"));
  s.l2 = get_double("model.l2");
  s.seed = std::uint64_t(get_int("seed"));
  return s;
}

EnsembleSpec Config::ensemble_spec() const {
  EnsembleSpec e;
  e.q = int(get_int("ensemble.q"));
  e.subsampleFrac = get_double("ensemble.subsample");
  const auto base = std::uint64_t(get_int("seed"));
  for (int i = 0; i < e.q; ++i) e.seeds.push_back(base + std::uint64_t(i));
  return e;
}

std::vector<double> Config::sigma_grid() const {
  const double step = get_double("eval.sigma_step");
  std::vector<double> grid;
  const auto n = std::llround(1.0 / step);
  if (std::abs(double(n) * step - 1.0) < 1e-9) {
    for (long long k = 0; k <= n; ++k) grid.push_back(double(k) / double(n));
  } else {
    for (long long k = 0; double(k) * step <= 1.0; ++k) grid.push_back(double(k) * step);
  }
  return grid;
}

}  // namespace ruinscan
