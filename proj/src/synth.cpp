#include "mgract/synth.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mgract/linalg.hpp"

namespace mgract {

using nlohmann::json;

void MotionSpec::validate() const {
  if (!(amplitude >= 0.0)) throw SynthError("amplitude must be non-negative");
  if (!(rate_bpm >= 0.0)) throw SynthError("rate must be non-negative");
  if (!(noise_sigma >= 0.0)) throw SynthError("noise sigma must be non-negative");
  if (!(elbow_bend_deg >= 0.0 && elbow_bend_deg < 180.0)) throw SynthError("elbow bend must lie in [0,180)");
  if (!(fps > 0.0) || !(duration_s > 0.0)) throw SynthError("fps and duration must be positive");
  if (!std::isfinite(tilt_deg) || !std::isfinite(drift_per_cycle)) throw SynthError("non-finite motion parameter");
  if (std::llround(duration_s * fps) < 2) throw SynthError("clip must span at least 2 frames");
}

namespace {

enum Joint : int {
  kNose, kLeftEye, kRightEye, kLeftEar, kRightEar, kLeftShoulder, kRightShoulder, kLeftElbow, kRightElbow,
  kLeftWrist, kRightWrist, kLeftHip, kRightHip, kLeftKnee, kRightKnee, kLeftAnkle, kRightAnkle
};

// Rest pose in body units; subject's left is +x.
constexpr std::array<std::array<double, 2>, 17> kRest{{
    {0.0, -2.05}, {0.08, -2.12}, {-0.08, -2.12}, {0.16, -2.08}, {-0.16, -2.08},
    {0.5, -1.5},  {-0.5, -1.5},  {0.0, 0.0},     {0.0, 0.0},     // elbows are derived
    {0.08, -0.2}, {-0.08, -0.2}, {0.35, 0.0},    {-0.35, 0.0},
    {0.4, 0.5},   {-0.4, 0.5},   {0.45, 0.65},   {-0.45, 0.65},
}};

Vector2d rotate(const Vector2d& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

// Elbow on the outward side of the shoulder-wrist chord, placed so that the
// interior angle is 180 - bend.
Vector2d elbow(const Vector2d& shoulder, const Vector2d& wrist, double bend_rad, double side) {
  const Vector2d mid = 0.5 * (shoulder + wrist);
  const Vector2d chord = wrist - shoulder;
  const double half = 0.5 * chord.norm();
  if (bend_rad == 0.0 || half == 0.0) return mid;
  Vector2d normal(-chord.y(), chord.x());
  normal.normalize();
  if (normal.x() * side < 0.0) normal = -normal;
  return mid + half * std::tan(0.5 * bend_rad) * normal;
}

double uniform(std::mt19937_64& rng, const Range& r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

}  // namespace

PoseSequence generate(const MotionSpec& spec) {
  spec.validate();
  const int frames = static_cast<int>(std::llround(spec.duration_s * spec.fps));
  std::mt19937_64 rng(spec.seed);
  const double phase0 = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> conf(0.85, 1.0);
  const double tilt = spec.tilt_deg * kPi / 180.0;
  const double bend = spec.elbow_bend_deg * kPi / 180.0;
  const double hz = spec.rate_bpm / 60.0;

  PoseSequence seq;
  seq.fps = spec.fps;
  seq.topology = coco17();
  seq.label = spec.label;
  seq.frames.assign(static_cast<std::size_t>(frames), std::vector<Keypoint>(17));
  for (int f = 0; f < frames; ++f) {
    const double t = f / spec.fps;
    const double push = spec.amplitude * 0.5 * (1.0 - std::cos(2.0 * kPi * hz * t + phase0));
    const double drift = spec.drift_per_cycle * hz * t;
    std::array<Vector2d, 17> p;
    for (int j = 0; j < 17; ++j) {
      p[j] = Vector2d(kRest[j][0], kRest[j][1]);
      if (p[j].y() < 0.0) p[j] = rotate(p[j], tilt);
    }
    for (int j : {kNose, kLeftEye, kRightEye, kLeftEar, kRightEar}) p[j].y() += 0.1 * push;
    for (int j : {kLeftShoulder, kRightShoulder}) p[j].y() += 0.4 * push;
    for (int j : {kLeftWrist, kRightWrist}) p[j] += Vector2d(drift, push);
    p[kLeftElbow] = elbow(p[kLeftShoulder], p[kLeftWrist], bend, 1.0);
    p[kRightElbow] = elbow(p[kRightShoulder], p[kRightWrist], bend, -1.0);
    for (int j = 0; j < 17; ++j) {
      Vector2d q = p[j];
      if (spec.noise_sigma > 0.0) q += spec.noise_sigma * Vector2d(noise(rng), noise(rng));
      seq.frames[f][j] = {0.5 + 0.2 * q.x(), 0.6 + 0.2 * q.y(), conf(rng)};
    }
  }
  return seq;
}

const std::vector<ClassRange>& default_class_ranges() {
  static const std::vector<ClassRange> ranges = [] {
    std::vector<ClassRange> r(8);
    r[0].label = "correct";
    r[1].label = "depth-insufficient";
    r[1].amplitude = {0.025, 0.04};
    r[2].label = "depth-excess";
    r[2].amplitude = {0.07, 0.085};
    r[3].label = "freq-slow";
    r[3].rate_bpm = {70, 90};
    r[4].label = "freq-excessive";
    r[4].rate_bpm = {130, 150};
    r[5].label = "arm-bend";
    r[5].elbow_bend_deg = {25, 40};
    r[6].label = "torso-tilt";
    r[6].tilt_deg = {15, 25};
    r[7].label = "position-drift";
    r[7].drift_per_cycle = {0.02, 0.04};
    return r;
  }();
  return ranges;
}

std::vector<ClassRange> parse_class_ranges(std::string_view json_text) {
  std::vector<ClassRange> out;
  try {
    const json doc = json::parse(json_text);
    if (!doc.is_array() || doc.empty()) throw SynthError("class ranges must be a non-empty array");
    for (const json& item : doc) {
      ClassRange r;
      r.label = item.at("label").get<std::string>();
      auto read = [&](const char* key, Range& dst) {
        if (!item.contains(key)) return;
        const auto v = item.at(key).get<std::vector<double>>();
        if (v.size() != 2 || !(v[0] <= v[1])) throw SynthError(std::string("range '") + key + "' must be [lo, hi]");
        dst = {v[0], v[1]};
      };
      read("amplitude", r.amplitude);
      read("rate_bpm", r.rate_bpm);
      read("elbow_bend_deg", r.elbow_bend_deg);
      read("tilt_deg", r.tilt_deg);
      read("drift_per_cycle", r.drift_per_cycle);
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw SynthError(std::string("malformed class ranges: ") + e.what());
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MotionSpec sample_spec(const ClassRange& range, std::uint64_t seed, double noise_sigma, double duration_s,
                       double fps) {
  std::mt19937_64 rng(seed);
  MotionSpec s;
  s.label = range.label;
  s.amplitude = uniform(rng, range.amplitude);
  s.rate_bpm = uniform(rng, range.rate_bpm);
  s.elbow_bend_deg = uniform(rng, range.elbow_bend_deg);
  s.tilt_deg = uniform(rng, range.tilt_deg);
  s.drift_per_cycle = uniform(rng, range.drift_per_cycle);
  s.noise_sigma = noise_sigma;
  s.duration_s = duration_s;
  s.fps = fps;
  s.seed = seed;
  s.validate();
  return s;
}

std::vector<DatasetEntry> plan_dataset(const DatasetOptions& opts) {
  if (opts.per_class < 1) throw SynthError("per_class must be at least 1");
  if (opts.classes.empty()) throw SynthError("no classes to generate");
  std::uint64_t state = opts.seed;
  std::vector<DatasetEntry> out;
  out.reserve(opts.classes.size() * static_cast<std::size_t>(opts.per_class));
  for (const ClassRange& cls : opts.classes) {
    for (int i = 0; i < opts.per_class; ++i) {
      DatasetEntry e;
      char name[32];
      std::snprintf(name, sizeof name, "%04d", i);
      e.path = cls.label + "/" + cls.label + "_" + name + ".json";
      e.spec = sample_spec(cls, splitmix64(state), opts.noise_sigma, opts.duration_s, opts.fps);
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::string manifest_csv(const std::vector<DatasetEntry>& entries) {
  std::ostringstream os;
  os.precision(17);
  os << "path,label,seed,amplitude,rate_bpm,elbow_bend_deg,tilt_deg,drift_per_cycle,noise_sigma,duration_s,fps\n";
  for (const DatasetEntry& e : entries) {
    const MotionSpec& s = e.spec;
    os << e.path << ',' << s.label << ',' << s.seed << ',' << s.amplitude << ',' << s.rate_bpm << ','
       << s.elbow_bend_deg << ',' << s.tilt_deg << ',' << s.drift_per_cycle << ',' << s.noise_sigma << ','
       << s.duration_s << ',' << s.fps << '\n';
  }
  return os.str();
}

std::vector<DatasetEntry> make_dataset(const DatasetOptions& opts, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<DatasetEntry> entries = plan_dataset(opts);
  try {
    for (const DatasetEntry& e : entries) {
      const fs::path path = fs::path(out_dir) / e.path;
      fs::create_directories(path.parent_path());
      save_pose_file(generate(e.spec), path.string());
    }
    std::ofstream manifest(fs::path(out_dir) / "manifest.csv", std::ios::binary);
    if (!manifest) throw SynthError("cannot write manifest under '" + out_dir + "'");
    manifest << manifest_csv(entries);
  } catch (const fs::filesystem_error& e) {
    throw SynthError(e.what());
  }
  return entries;
}

}  // namespace mgract
