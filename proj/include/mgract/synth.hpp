#pragma once

// Seeded synthetic chest-compression clips on the COCO-17 skeleton.
//
// The body is modelled in body units (shoulder width 1, hips at the origin,
// image y pointing down) and mapped into image coordinates as
// (0.5 + 0.2 x, 0.6 + 0.2 y). Amplitudes, drift and noise are all given in
// body units, so they read directly in the normalised space that the
// tokenizer and metric extractor see.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mgract/skeleton.hpp"

namespace mgract {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MotionSpec {
  std::string label = "correct";
  double amplitude = 0.055;       // peak-to-trough wrist excursion
  double rate_bpm = 110.0;
  double elbow_bend_deg = 0.0;    // 180 minus the interior elbow angle
  double tilt_deg = 0.0;          // upper-body lean about the hips
  double drift_per_cycle = 0.0;   // horizontal hand travel per stroke
  double noise_sigma = 0.0;       // isotropic keypoint jitter
  double duration_s = 4.0;
  double fps = 30.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Animates a COCO-17 skeleton; fully determined by its MotionSpec.
PoseSequence generate(const MotionSpec& spec);

struct Range {
  double lo = 0;
  double hi = 0;
};

/// Per-class jitter ranges. Every class differs from "correct" along one
/// defining dimension and the ranges never overlap on it.
struct ClassRange {
  std::string label;
  Range amplitude{0.05, 0.06};
  Range rate_bpm{105, 118};
  Range elbow_bend_deg{0, 5};
  Range tilt_deg{0, 5};
  Range drift_per_cycle{0, 0.002};
};

/// correct, depth-insufficient, depth-excess, freq-slow, freq-excessive,
/// arm-bend, torso-tilt, position-drift.
const std::vector<ClassRange>& default_class_ranges();
/// JSON array of {"label", "amplitude": [lo, hi], ...}; omitted dimensions
/// take the "correct" ranges.
std::vector<ClassRange> parse_class_ranges(std::string_view json_text);

std::uint64_t splitmix64(std::uint64_t& state);

/// Uniform draws inside `range`, seeded by `seed`.
MotionSpec sample_spec(const ClassRange& range, std::uint64_t seed, double noise_sigma, double duration_s, double fps);

struct DatasetOptions {
  int per_class = 200;
  double noise_sigma = 0.005;
  std::uint64_t seed = 7;
  double duration_s = 4.0;
  double fps = 30.0;
  std::vector<ClassRange> classes = default_class_ranges();
};

struct DatasetEntry {
  std::string path;  // relative to the dataset root
  MotionSpec spec;
};

/// Specs and relative paths only; clip seeds are split from opts.seed.
std::vector<DatasetEntry> plan_dataset(const DatasetOptions& opts);
/// Writes every clip as pose JSON plus manifest.csv under `out_dir`.
std::vector<DatasetEntry> make_dataset(const DatasetOptions& opts, const std::string& out_dir);
std::string manifest_csv(const std::vector<DatasetEntry>& entries);

}  // namespace mgract
