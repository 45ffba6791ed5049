#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ruinscan/chips.hpp"
#include "ruinscan/eval.hpp"
#include "ruinscan/label.hpp"
#include "ruinscan/model.hpp"
#include "ruinscan/raster.hpp"
#include "ruinscan/segment.hpp"
#include "ruinscan/synth.hpp"

namespace ruinscan {

enum class Delta0Mode { Auto, Meters };

/// Flat dotted-key configuration. Every key has a default; unknown keys and
/// unparsable values are rejected with a ValidationError naming the key.
class Config {
 public:
  Config();

  static Config load(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  /// Parses "key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// Cross-field checks; throws ValidationError.
  void validate() const;

  /// Hex digest over the keys that feed `stage` and every stage upstream of it.
  std::string stage_hash(const std::string& stage) const;

  std::string serialize() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Typed views.
  SiteSpec site_spec() const;
  double resolution() const;
  double max_search() const;
  double eps_xy() const;
  LocalizeParams localize_params() const;
  Delta0Mode delta0_mode() const;
  TuneOptions tune_options(int threads) const;
  PrefilterRules prefilter_rules() const;
  MbbMode mbb_mode() const;
  HouseRule house_rule() const;
  SplitSpec split_spec() const;
  AugmentPlan augment_plan() const;
  int chip_size() const;
  ScorerSpec scorer_spec() const;
  EnsembleSpec ensemble_spec() const;
  std::vector<double> sigma_grid() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Ordered pipeline stages.
const std::vector<std::string>& stage_names();

}  // namespace ruinscan
