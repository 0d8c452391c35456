#pragma once

// Kinematic metrics, descriptor quantisation, rule-based findings and the
// effectiveness score that make up an evaluation report.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mgract/skeleton.hpp"

namespace mgract {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KinematicMetrics {
  double compression_rate = 0;  // bpm, 0 when too short
  bool too_short = false;       // no full oscillation in the searched band
  double depth_units = 0;       // peak-to-trough wrist excursion, normalised units
  std::optional<double> depth_cm;
  double elbow_angle_mean = 0;  // degrees at the elbow, 180 = straight
  double torso_tilt = 0;        // degrees between hip->shoulder axis and vertical
  double recoil_completeness = 1;
  double hand_drift = 0;        // horizontal hand travel per stroke, normalised units
};

/// Metrics from a normalised sequence. The topology must name
/// left/right shoulder, elbow, wrist and hip joints.
KinematicMetrics extract_metrics(const NormalizedSequence& seq, std::optional<double> cm_per_unit = std::nullopt);

/// Rate (bpm) of the dominant oscillation of `signal` sampled at `fps`:
/// autocorrelation peak over 40-200 bpm, refined by a least-squares sinusoid
/// fit. Returns nullopt when no interior peak exists.
std::optional<double> estimate_rate(const Eigen::VectorXd& signal, double fps);

struct Bin {
  std::string label;
  std::optional<double> lo;  // nullopt = unbounded
  std::optional<double> hi;
  bool lo_inclusive = true;
  bool hi_inclusive = true;

  bool contains(double v) const;
};

struct MetricBins {
  std::string metric;
  std::string unit;          // printed right after the number
  std::string noun;          // trailing phrase, e.g. "compression"
  double display_scale = 1;  // value shown = metric * display_scale
  int decimals = 1;
  std::vector<Bin> bins;

  /// Throws unless bins cover the real line without overlap.
  void validate() const;
};

struct BinTable {
  int version = 1;
  std::vector<MetricBins> metrics;

  const MetricBins& at(std::string_view metric) const;
};

BinTable parse_bin_table(std::string_view json_text);
BinTable load_bin_table(const std::string& path);

struct Descriptor {
  std::string metric;
  std::string label;
  double value = 0;  // in display units
  std::string text;  // e.g. "insufficient 4cm compression"
};

/// Fixed-point with `decimals` digits, trailing zeros and point trimmed.
std::string format_value(double v, int decimals);

/// Descriptors for depth (cm when calibrated, else normalised units), rate,
/// elbow, tilt, recoil and drift. A too-short clip gets rate label "unknown".
std::vector<Descriptor> quantize(const KinematicMetrics& metrics, const BinTable& bins);
Descriptor quantize_value(const MetricBins& bins, double value);

struct Condition {
  std::string metric;
  std::string label;
};

struct Rule {
  std::string id;
  std::string category;  // key into the penalty table
  int severity = 1;      // 1 = most severe
  std::vector<Condition> when;  // all must hold
  std::string manifestation;
  std::string consequence;
};

struct RuleTable {
  int version = 1;
  std::vector<Rule> rules;
  std::map<std::string, double> penalties;  // category -> points

  /// rule id -> penalty
  std::map<std::string, double> weights() const;
};

RuleTable parse_rule_table(std::string_view json_text);
RuleTable load_rule_table(const std::string& path);

struct Finding {
  std::string rule_id;
  std::vector<std::string> evidence;  // descriptor texts that matched
  std::string manifestation;
  std::string consequence;
  int severity = 1;
};

/// Fires every rule whose conditions all match; ordered by severity, then
/// table order.
std::vector<Finding> reason_chain(const std::vector<Descriptor>& descriptors, const RuleTable& rules);

/// 100 minus the summed penalties of the findings, clamped to [0, 100].
int effectiveness_score(const std::vector<Finding>& findings, const std::map<std::string, double>& weights);

struct LabelPrediction {
  std::string primary;
  std::vector<std::pair<std::string, double>> secondary;  // label, probability
  std::vector<std::pair<std::string, double>> probabilities;
};

struct EvaluationReport {
  KinematicMetrics metrics;
  std::vector<Descriptor> descriptors;
  std::vector<Finding> findings;
  int effectiveness = 100;
  std::optional<LabelPrediction> prediction;
};

EvaluationReport build_report(const KinematicMetrics& metrics, const BinTable& bins, const RuleTable& rules,
                              std::optional<LabelPrediction> prediction = std::nullopt);

std::string report_json(const EvaluationReport& report, const std::string& provenance_json = {});
std::string report_text(const EvaluationReport& report);

}  // namespace mgract
