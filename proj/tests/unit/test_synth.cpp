#include <filesystem>
#include <set>

#include "doctest.h"
#include "mgract/report.hpp"
#include "mgract/synth.hpp"

using namespace mgract;
namespace fs = std::filesystem;

TEST_CASE("generate: shape and metadata") {
  MotionSpec s;
  s.duration_s = 2;
  const PoseSequence seq = generate(s);
  CHECK(seq.num_frames() == 60);
  CHECK(seq.num_joints() == 17);
  CHECK(seq.fps == 30);
  CHECK(seq.label == std::optional<std::string>("correct"));
  for (const auto& frame : seq.frames)
    for (const auto& kp : frame) {
      CHECK(kp.confidence >= 0.85);
      CHECK(kp.confidence <= 1.0);
    }
}

TEST_CASE("generate: same spec and seed are bitwise identical") {
  MotionSpec s;
  s.seed = 42;
  s.noise_sigma = 0.0;
  CHECK(generate(s).frames == generate(s).frames);
  s.noise_sigma = 0.01;
  CHECK(generate(s).frames == generate(s).frames);
  MotionSpec t = s;
  t.seed = 43;
  CHECK(generate(s).frames != generate(t).frames);
}

TEST_CASE("generate: correct spec is recovered by metric extraction") {
  MotionSpec s;
  s.amplitude = 0.055;
  s.rate_bpm = 110;
  s.noise_sigma = 0.005;
  s.seed = 1;
  const KinematicMetrics m = extract_metrics(normalize(generate(s)), 100.0);
  CHECK(std::abs(m.compression_rate - 110) <= 3);
  CHECK(std::abs(*m.depth_cm - 5.5) <= 0.55);
  CHECK(m.elbow_angle_mean >= 170);
}

TEST_CASE("generate: elbow bend, tilt and drift show up in the metrics") {
  MotionSpec s;
  s.seed = 2;
  s.elbow_bend_deg = 30;
  CHECK(extract_metrics(normalize(generate(s))).elbow_angle_mean == doctest::Approx(150).epsilon(0.03));
  s.elbow_bend_deg = 0;
  s.tilt_deg = 20;
  CHECK(extract_metrics(normalize(generate(s))).torso_tilt == doctest::Approx(20).epsilon(0.05));
  s.tilt_deg = 0;
  s.drift_per_cycle = 0.03;
  CHECK(extract_metrics(normalize(generate(s))).hand_drift == doctest::Approx(0.03).epsilon(0.1));
}

TEST_CASE("generate: invalid specs are rejected") {
  MotionSpec s;
  s.noise_sigma = -1;
  CHECK_THROWS_AS(generate(s), SynthError);
  s = {};
  s.elbow_bend_deg = 180;
  CHECK_THROWS_AS(generate(s), SynthError);
  s = {};
  s.duration_s = 0.01;
  CHECK_THROWS_AS(generate(s), SynthError);
}

TEST_CASE("class ranges: default palette and parsing") {
  const auto& ranges = default_class_ranges();
  REQUIRE(ranges.size() == 8u);
  std::set<std::string> labels;
  for (const auto& r : ranges) labels.insert(r.label);
  CHECK(labels == std::set<std::string>{"correct", "depth-insufficient", "depth-excess", "freq-slow", "freq-excessive",
                                        "arm-bend", "torso-tilt", "position-drift"});
  const auto custom = parse_class_ranges(R"([{"label":"fast","rate_bpm":[150,160]}])");
  REQUIRE(custom.size() == 1u);
  CHECK(custom[0].rate_bpm.lo == 150);
  CHECK(custom[0].amplitude.lo == ranges[0].amplitude.lo);
  CHECK_THROWS_AS(parse_class_ranges(R"([{"label":"x","rate_bpm":[3,1]}])"), SynthError);
  CHECK_THROWS_AS(parse_class_ranges("[]"), SynthError);
}

TEST_CASE("sampled specs stay inside their ranges and differ across seeds") {
  const ClassRange& r = default_class_ranges()[3];
  const MotionSpec a = sample_spec(r, 1, 0.005, 4, 30);
  const MotionSpec b = sample_spec(r, 2, 0.005, 4, 30);
  CHECK(a.rate_bpm >= r.rate_bpm.lo);
  CHECK(a.rate_bpm <= r.rate_bpm.hi);
  CHECK(a.label == r.label);
  CHECK(a.rate_bpm != b.rate_bpm);
  CHECK(a.amplitude != b.amplitude);
}

TEST_CASE("dataset plan: counts, paths and determinism") {
  DatasetOptions o;
  o.per_class = 200;
  const auto plan = plan_dataset(o);
  CHECK(plan.size() == 1600u);
  CHECK(plan.front().path == "correct/correct_0000.json");
  std::set<std::uint64_t> seeds;
  for (const auto& e : plan) seeds.insert(e.spec.seed);
  CHECK(seeds.size() == plan.size());
  const auto again = plan_dataset(o);
  CHECK(again.back().spec.rate_bpm == plan.back().spec.rate_bpm);
  DatasetOptions other = o;
  other.seed = 8;
  CHECK(plan_dataset(other).front().spec.amplitude != plan.front().spec.amplitude);
}

TEST_CASE("dataset: files and manifest on disk") {
  const fs::path dir = fs::temp_directory_path() / "mgract_synth_test";
  fs::remove_all(dir);
  DatasetOptions o;
  o.per_class = 2;
  o.duration_s = 1;
  const auto entries = make_dataset(o, dir.string());
  CHECK(entries.size() == 16u);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) files += e.path().extension() == ".json";
  CHECK(files == 16u);
  CHECK(fs::exists(dir / "manifest.csv"));
  const PoseSequence back = load_pose_file((dir / entries[5].path).string());
  CHECK(back.label == std::optional<std::string>(entries[5].spec.label));
  CHECK(manifest_csv(entries).rfind("path,label,seed", 0) == 0);
  fs::remove_all(dir);
}
