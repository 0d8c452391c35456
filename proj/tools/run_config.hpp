#pragma once

// Resolved run configuration: defaults, then a config file (JSON or a TOML
// subset), then command-line flags. The resolved form is embedded in every
// artifact the CLI writes.

#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mgract/hse.hpp"
#include "mgract/gmm.hpp"
#include "mgract/skeleton.hpp"
#include "mgract/synth.hpp"
#include "mgract/train.hpp"

namespace mgract::cli {

inline constexpr const char* kToolVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ParseOptions parse;
  HseConfig hse;
  MgrConfig mgr;
  std::optional<int> resample;
  TrainConfig train;
  DatasetOptions synth;
  std::optional<std::string> synth_classes;  // class-range JSON file
  std::optional<double> cm_per_unit;
  std::string bins_path;
  std::string rules_path;
  double min_support = 0.025;
  double min_confidence = 0.25;
  int threads = 1;  // not part of provenance; results do not depend on it

  RunConfig();
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays the keys present in `j` (same layout as to_json).
void apply_json(RunConfig& cfg, const nlohmann::json& j);

/// [section] headers, key = value with strings, numbers, booleans and flat
/// arrays; '#' comments. Dotted section names nest.
nlohmann::json parse_toml_subset(std::string_view text);
/// JSON when the file starts with '{', otherwise the TOML subset.
nlohmann::json load_config_file(const std::string& path);

/// "lo..hi" or a single integer.
KRange parse_k_range(std::string_view text);
std::string format_k_range(const KRange& r);

/// MGR_ACT_THREADS when set, else the hardware thread count.
int default_threads();

/// {"tool", "version", "command", "config"} as compact JSON.
std::string provenance_json(const RunConfig& cfg, const std::string& command);

}  // namespace mgract::cli
