#include <algorithm>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "mgract/report.hpp"
#include "mgract/synth.hpp"

using namespace mgract;

namespace {

const BinTable& bins() {
  static const BinTable t = load_bin_table(MGRACT_DATA_DIR "/bins.json");
  return t;
}

const RuleTable& rules() {
  static const RuleTable t = load_rule_table(MGRACT_DATA_DIR "/rules.json");
  return t;
}

KinematicMetrics good_metrics() {
  KinematicMetrics m;
  m.compression_rate = 110;
  m.depth_units = 0.055;
  m.depth_cm = 5.5;
  m.elbow_angle_mean = 176;
  m.torso_tilt = 3;
  m.recoil_completeness = 0.97;
  m.hand_drift = 0.001;
  return m;
}

MotionSpec clip(double rate, double amplitude, std::uint64_t seed) {
  MotionSpec s;
  s.rate_bpm = rate;
  s.amplitude = amplitude;
  s.noise_sigma = 0.002;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("metrics: generator rate, depth and straight arms are recovered") {
  const KinematicMetrics m = extract_metrics(normalize(generate(clip(110, 0.05, 1))), 100.0);
  CHECK(std::abs(m.compression_rate - 110) <= 3);
  REQUIRE(m.depth_cm);
  CHECK(std::abs(*m.depth_cm - 5.0) <= 0.5);
  CHECK(m.elbow_angle_mean >= 170);
  CHECK(m.torso_tilt < 10);
  CHECK_FALSE(m.too_short);
}

TEST_CASE("metrics: without calibration depth stays in normalised units") {
  const KinematicMetrics m = extract_metrics(normalize(generate(clip(100, 0.06, 2))));
  CHECK_FALSE(m.depth_cm);
  CHECK(m.depth_units == doctest::Approx(0.06).epsilon(0.1));
}

TEST_CASE("metrics: rate is invariant to vertical translation") {
  NormalizedSequence seq = normalize(generate(clip(125, 0.055, 3)));
  const double before = extract_metrics(seq).compression_rate;
  for (auto& frame : seq.pose.frames)
    for (auto& kp : frame) kp.y += 0.37;
  CHECK(extract_metrics(seq).compression_rate == doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("metrics: a clip shorter than one stroke reports rate 0") {
  MotionSpec s = clip(60, 0.05, 4);
  s.duration_s = 0.5;
  const KinematicMetrics m = extract_metrics(normalize(generate(s)));
  CHECK(m.too_short);
  CHECK(m.compression_rate == 0);
  const auto d = quantize(m, bins());
  CHECK(std::any_of(d.begin(), d.end(), [](const Descriptor& x) { return x.metric == "rate" && x.label == "unknown"; }));
}

TEST_CASE("metrics: missing arm joints are an error") {
  PoseSequence p;
  p.topology.joint_names = {"a", "b"};
  p.topology.parent = {0, 0};
  p.frames.assign(30, {{0, 0, 1}, {1, 0, 1}});
  CHECK_THROWS_AS(extract_metrics(normalize(p)), ReportError);
}

TEST_CASE("quantize: descriptor strings") {
  CHECK(quantize_value(bins().at("depth"), 4.0).text == "insufficient 4cm compression");
  CHECK(quantize_value(bins().at("rate"), 110.0).text == "optimal 110bpm rhythm");
  CHECK(quantize_value(bins().at("rate"), 115.0).label == "optimal");
  CHECK(quantize_value(bins().at("rate"), 120.04).label == "optimal");  // rounds to the 120 boundary
  CHECK(quantize_value(bins().at("rate"), 120.06).label == "excessive");
  CHECK(quantize_value(bins().at("recoil"), 0.8).text == "incomplete 80% recoil");
}

TEST_CASE("quantize: every value lands in exactly one bin") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50, 300);
  for (const MetricBins& mb : bins().metrics) {
    for (int i = 0; i < 200; ++i) {
      const double v = u(rng) / mb.display_scale;
      const Descriptor d = quantize_value(mb, v);
      int hits = 0;
      for (const Bin& b : mb.bins) hits += b.contains(d.value);
      CHECK(hits == 1);
    }
  }
}

TEST_CASE("quantize: an excessive-rate clip is labelled excessive") {
  const auto d = quantize(extract_metrics(normalize(generate(clip(140, 0.055, 9)))), bins());
  const auto rate = std::find_if(d.begin(), d.end(), [](const Descriptor& x) { return x.metric == "rate"; });
  REQUIRE(rate != d.end());
  CHECK(rate->label == "excessive");
}

TEST_CASE("reasoning: insufficient depth") {
  KinematicMetrics m = good_metrics();
  m.depth_cm = 4.0;
  const auto findings = reason_chain(quantize(m, bins()), rules());
  REQUIRE(findings.size() == 1u);
  CHECK(findings[0].manifestation == "compressions too shallow");
  CHECK(findings[0].consequence == "reduced perfusion");
  CHECK(findings[0].evidence == std::vector<std::string>{"insufficient 4cm compression"});
  CHECK(effectiveness_score(findings, rules().weights()) == 75);
}

TEST_CASE("reasoning: all optimal gives no findings and full score") {
  const auto findings = reason_chain(quantize(good_metrics(), bins()), rules());
  CHECK(findings.empty());
  CHECK(effectiveness_score(findings, rules().weights()) == 100);
}

TEST_CASE("score: clamps at zero and ignores order") {
  std::vector<Finding> all;
  for (const Rule& r : rules().rules) all.push_back({r.id, {}, r.manifestation, r.consequence, r.severity});
  CHECK(effectiveness_score(all, rules().weights()) == 0);
  std::vector<Finding> two{all[0], all.back()};
  std::vector<Finding> swapped{all.back(), all[0]};
  CHECK(effectiveness_score(two, rules().weights()) == effectiveness_score(swapped, rules().weights()));
}

TEST_CASE("reasoning: conjunctive rules fire before their parts") {
  KinematicMetrics m = good_metrics();
  m.compression_rate = 135;
  m.depth_cm = 6.8;
  const auto findings = reason_chain(quantize(m, bins()), rules());
  REQUIRE(findings.size() >= 3u);
  CHECK(findings[0].rule_id == "R5");
  CHECK(findings[0].evidence.size() == 2u);
  for (std::size_t i = 1; i < findings.size(); ++i) CHECK(findings[i - 1].severity <= findings[i].severity);
}

TEST_CASE("report: JSON and text renderings") {
  LabelPrediction pred;
  pred.primary = "correct";
  pred.probabilities = {{"correct", 0.8}, {"freq-slow", 0.2}};
  pred.secondary = {{"freq-slow", 0.2}};
  KinematicMetrics m = good_metrics();
  m.recoil_completeness = 0.5;
  const EvaluationReport r = build_report(m, bins(), rules(), pred);
  const auto doc = nlohmann::json::parse(report_json(r, R"({"tool":"t"})"));
  CHECK(doc.at("effectiveness").get<int>() == r.effectiveness);
  CHECK(doc.at("findings").size() == r.findings.size());
  CHECK(doc.at("prediction").at("primary") == "correct");
  CHECK(doc.at("provenance").at("tool") == "t");
  const std::string text = report_text(r);
  CHECK(text.find("incomplete 50% recoil") != std::string::npos);
  CHECK(text.find("correct") != std::string::npos);
}

TEST_CASE("tables: malformed input is rejected") {
  CHECK_THROWS_AS(parse_bin_table(R"({"version":1,"metrics":[{"metric":"rate","bins":[]}]})"), ReportError);
  CHECK_THROWS_AS(parse_rule_table(R"({"version":1,"penalties":{},"rules":[{"id":"X","category":"depth"}]})"),
                  ReportError);
  CHECK_THROWS_AS(load_bin_table("/nonexistent/bins.json"), ReportError);
}
