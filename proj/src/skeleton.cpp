#include "mgract/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace mgract {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SkeletonTopology make_coco17() {
  SkeletonTopology t;
  t.joint_names = {"nose",        "left_eye",       "right_eye",  "left_ear",    "right_ear",  "left_shoulder",
                   "right_shoulder", "left_elbow",  "right_elbow", "left_wrist", "right_wrist", "left_hip",
                   "right_hip",   "left_knee",      "right_knee", "left_ankle",  "right_ankle"};
  t.parent = {5, 0, 0, 1, 2, 11, 12, 5, 6, 7, 8, 11, 11, 11, 12, 13, 14};
  t.reference_a = 5;
  t.reference_b = 6;
  return t;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const char* what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "nan" || s == "NaN" || s.empty()) return kNaN;
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw PoseError(std::string("malformed number in ") + what + ": '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

SkeletonTopology topology_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "coco17") return coco17();
    throw PoseError("unknown topology '" + j.get<std::string>() + "'");
  }
  if (!j.is_object()) throw PoseError("topology must be \"coco17\" or an object");
  SkeletonTopology t;
  t.joint_names = j.at("joints").get<std::vector<std::string>>();
  const json& parents = j.at("parents");
  if (!parents.is_array() || parents.size() != t.joint_names.size()) {
    throw PoseError("topology parents must list one parent per joint");
  }
  auto resolve = [&](const json& v) -> int {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_string()) {
      const int idx = t.find(v.get<std::string>());
      if (idx < 0) throw PoseError("unknown joint name '" + v.get<std::string>() + "'");
      return idx;
    }
    throw PoseError("topology entries must be joint names or indices");
  };
  for (const auto& p : parents) t.parent.push_back(resolve(p));
  if (j.contains("reference_pair")) {
    const json& rp = j.at("reference_pair");
    if (!rp.is_array() || rp.size() != 2) throw PoseError("reference_pair must have two entries");
    t.reference_a = resolve(rp[0]);
    t.reference_b = resolve(rp[1]);
  } else {
    t.reference_a = t.find("left_shoulder");
    t.reference_b = t.find("right_shoulder");
    if (t.reference_a < 0 || t.reference_b < 0) {
      throw PoseError("custom topology without shoulders needs an explicit reference_pair");
    }
  }
  t.validate();
  return t;
}

json topology_to_json(const SkeletonTopology& t) {
  if (t == coco17()) return "coco17";
  json j;
  j["joints"] = t.joint_names;
  j["parents"] = t.parent;
  j["reference_pair"] = {t.reference_a, t.reference_b};
  return j;
}

PoseSequence parse_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw PoseError(std::string("malformed pose document: ") + e.what());
  }
  if (!doc.is_object()) throw PoseError("malformed pose document: expected an object");
  PoseSequence seq;
  try {
    seq.fps = doc.value("fps", 30.0);
    seq.topology = doc.contains("topology") ? topology_from_json(doc.at("topology")) : coco17();
    if (doc.contains("label") && !doc.at("label").is_null()) seq.label = doc.at("label").get<std::string>();
    const json& frames = doc.at("frames");
    if (!frames.is_array()) throw PoseError("malformed pose document: frames must be an array");
    const int m = seq.topology.size();
    for (const auto& frame : frames) {
      if (!frame.is_array() || static_cast<int>(frame.size()) != m) {
        throw PoseError("malformed pose document: every frame needs " + std::to_string(m) + " joints");
      }
      std::vector<Keypoint> row;
      row.reserve(static_cast<std::size_t>(m));
      for (const auto& kp : frame) {
        Keypoint p{kNaN, kNaN, 0.0};
        if (kp.is_array() && kp.size() == 3) {
          p.x = kp[0].is_number() ? kp[0].get<double>() : kNaN;
          p.y = kp[1].is_number() ? kp[1].get<double>() : kNaN;
          p.confidence = kp[2].is_number() ? kp[2].get<double>() : 0.0;
        } else if (!kp.is_null()) {
          throw PoseError("malformed pose document: keypoints are [x, y, conf] or null");
        }
        row.push_back(p);
      }
      seq.frames.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw PoseError(std::string("malformed pose document: ") + e.what());
  }
  return seq;
}

// CSV: optional "# key=value" metadata lines (fps, label, topology), then
// the header frame,joint,x,y,conf and one row per keypoint.
PoseSequence parse_csv(std::string_view text) {
  PoseSequence seq;
  seq.topology = coco17();
  std::istringstream in{std::string(text)};
  std::string line;
  bool header_seen = false;
  struct Row {
    int frame;
    int joint;
    Keypoint kp;
  };
  std::vector<Row> rows;
  std::vector<std::string> pending_joint_names;
  std::vector<int> pending_frames;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      sv.remove_prefix(1);
      sv = trim(sv);
      const auto eq = sv.find('=');
      if (eq == std::string_view::npos) continue;
      const std::string key(trim(sv.substr(0, eq)));
      const std::string value(trim(sv.substr(eq + 1)));
      if (key == "fps") {
        seq.fps = parse_double(value, "fps");
      } else if (key == "label") {
        seq.label = value;
      } else if (key == "topology") {
        seq.topology = topology_from_json_text(value == "coco17" ? "\"coco17\"" : value);
      }
      continue;
    }
    if (!header_seen) {
      const auto cols = split(sv, ',');
      if (cols.size() != 5 || trim(cols[0]) != "frame" || trim(cols[1]) != "joint" || trim(cols[2]) != "x" ||
          trim(cols[3]) != "y" || trim(cols[4]) != "conf") {
        throw PoseError("malformed pose CSV: expected header frame,joint,x,y,conf");
      }
      header_seen = true;
      continue;
    }
    const auto cols = split(sv, ',');
    if (cols.size() != 5) throw PoseError("malformed pose CSV at line " + std::to_string(line_no));
    const double frame_d = parse_double(cols[0], "frame");
    if (!std::isfinite(frame_d) || frame_d < 0 || frame_d != std::floor(frame_d)) {
      throw PoseError("malformed pose CSV: bad frame index at line " + std::to_string(line_no));
    }
    const std::string_view joint_field = trim(cols[1]);
    int joint = -1;
    int parsed = 0;
    auto res = std::from_chars(joint_field.data(), joint_field.data() + joint_field.size(), parsed);
    if (res.ec == std::errc() && res.ptr == joint_field.data() + joint_field.size()) {
      joint = parsed;
    } else {
      pending_joint_names.emplace_back(joint_field);
      joint = -1 - static_cast<int>(pending_joint_names.size() - 1);
    }
    Keypoint kp{parse_double(cols[2], "x"), parse_double(cols[3], "y"), parse_double(cols[4], "conf")};
    if (!std::isfinite(kp.confidence)) kp.confidence = 0.0;
    rows.push_back({static_cast<int>(frame_d), joint, kp});
  }
  if (!header_seen) throw PoseError("malformed pose CSV: missing header");

  const int m = seq.topology.size();
  int max_frame = -1;
  for (auto& r : rows) {
    if (r.joint < 0) {
      const std::string& name = pending_joint_names[static_cast<std::size_t>(-1 - r.joint)];
      r.joint = seq.topology.find(name);
      if (r.joint < 0) throw PoseError("unknown joint name '" + name + "'");
    }
    if (r.joint >= m) throw PoseError("joint index " + std::to_string(r.joint) + " out of range");
    max_frame = std::max(max_frame, r.frame);
  }
  seq.frames.assign(static_cast<std::size_t>(max_frame + 1),
                    std::vector<Keypoint>(static_cast<std::size_t>(m), Keypoint{kNaN, kNaN, 0.0}));
  std::vector<std::vector<bool>> seen(seq.frames.size(), std::vector<bool>(static_cast<std::size_t>(m), false));
  for (const auto& r : rows) {
    if (seen[r.frame][r.joint]) {
      throw PoseError("duplicate row for frame " + std::to_string(r.frame) + " joint " + std::to_string(r.joint));
    }
    seen[r.frame][r.joint] = true;
    seq.frames[r.frame][r.joint] = r.kp;
  }
  return seq;
}

bool is_valid(const Keypoint& kp, double threshold) {
  return std::isfinite(kp.x) && std::isfinite(kp.y) && kp.confidence >= threshold;
}

}  // namespace

const SkeletonTopology& coco17() {
  static const SkeletonTopology topology = make_coco17();
  return topology;
}

int SkeletonTopology::root() const {
  for (int i = 0; i < size(); ++i) {
    if (parent[i] == i) return i;
  }
  return -1;
}

int SkeletonTopology::centering_joint() const {
  for (const char* name : {"mid_hip", "midhip", "pelvis"}) {
    const int idx = find(name);
    if (idx >= 0) return idx;
  }
  return root();
}

int SkeletonTopology::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (joint_names[i] == name) return i;
  }
  return -1;
}

void SkeletonTopology::validate() const {
  const int m = size();
  if (m < 2) throw PoseError("topology needs at least 2 joints");
  if (static_cast<int>(parent.size()) != m) throw PoseError("topology parent array has wrong length");
  int roots = 0;
  for (int i = 0; i < m; ++i) {
    if (parent[i] < 0 || parent[i] >= m) throw PoseError("topology parent index out of range");
    if (parent[i] == i) ++roots;
  }
  if (roots != 1) throw PoseError("topology must have exactly one root");
  for (int i = 0; i < m; ++i) {
    int cur = i;
    for (int steps = 0; parent[cur] != cur; ++steps) {
      if (steps > m) throw PoseError("topology parent array contains a cycle");
      cur = parent[cur];
    }
  }
  if (reference_a < 0 || reference_a >= m || reference_b < 0 || reference_b >= m || reference_a == reference_b) {
    throw PoseError("topology reference pair is invalid");
  }
}

void PoseSequence::validate() const {
  topology.validate();
  if (!(fps > 0) || !std::isfinite(fps)) throw PoseError("fps must be a positive number");
  if (num_frames() < 2) throw PoseError("sequence needs at least 2 frames (T=" + std::to_string(num_frames()) + ")");
  for (const auto& frame : frames) {
    if (static_cast<int>(frame.size()) != num_joints()) throw PoseError("frame width does not match topology");
    for (const auto& kp : frame) {
      if (!std::isfinite(kp.x) || !std::isfinite(kp.y)) throw PoseError("non-finite coordinate");
      if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0)) throw PoseError("confidence outside [0,1]");
    }
  }
}

void repair_missing(PoseSequence& seq, double threshold) {
  const int t_count = seq.num_frames();
  const int m = seq.num_joints();
  for (int j = 0; j < m; ++j) {
    std::vector<int> valid;
    for (int t = 0; t < t_count; ++t) {
      if (is_valid(seq.at(t, j), threshold)) valid.push_back(t);
    }
    if (valid.empty()) throw PoseError("unrecoverable joint '" + seq.topology.joint_names[j] + "'");
    if (static_cast<int>(valid.size()) == t_count) continue;
    std::size_t next = 0;
    for (int t = 0; t < t_count; ++t) {
      while (next < valid.size() && valid[next] < t) ++next;
      if (next < valid.size() && valid[next] == t) continue;
      Keypoint& kp = seq.at(t, j);
      if (next == 0) {
        kp.x = seq.at(valid.front(), j).x;
        kp.y = seq.at(valid.front(), j).y;
      } else if (next == valid.size()) {
        kp.x = seq.at(valid.back(), j).x;
        kp.y = seq.at(valid.back(), j).y;
      } else {
        const int a = valid[next - 1];
        const int b = valid[next];
        const double w = static_cast<double>(t - a) / static_cast<double>(b - a);
        kp.x = seq.at(a, j).x + w * (seq.at(b, j).x - seq.at(a, j).x);
        kp.y = seq.at(a, j).y + w * (seq.at(b, j).y - seq.at(a, j).y);
      }
      if (!std::isfinite(kp.confidence)) kp.confidence = 0.0;
      kp.confidence = std::clamp(kp.confidence, 0.0, 1.0);
    }
  }
}

PoseSequence parse_pose(std::string_view text, PoseFormat format, const ParseOptions& opts) {
  PoseSequence seq = format == PoseFormat::Json ? parse_json(text) : parse_csv(text);
  seq.topology.validate();
  if (seq.num_frames() < 2) {
    throw PoseError("sequence needs at least 2 frames (T=" + std::to_string(seq.num_frames()) + ")");
  }
  for (auto& frame : seq.frames) {
    for (auto& kp : frame) {
      if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0)) throw PoseError("confidence outside [0,1]");
    }
  }
  repair_missing(seq, opts.confidence_threshold);
  seq.validate();
  return seq;
}

PoseFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "csv" || ext == "CSV") return PoseFormat::Csv;
  return PoseFormat::Json;
}

PoseSequence load_pose_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PoseError("cannot open pose file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pose(buf.str(), format_from_path(path), opts);
}

SkeletonTopology topology_from_json_text(std::string_view text) {
  try {
    return topology_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw PoseError(std::string("malformed topology: ") + e.what());
  }
}

std::string serialize_pose_json(const PoseSequence& seq) {
  json doc;
  doc["fps"] = seq.fps;
  doc["topology"] = topology_to_json(seq.topology);
  doc["label"] = seq.label ? json(*seq.label) : json(nullptr);
  json frames = json::array();
  for (const auto& frame : seq.frames) {
    json row = json::array();
    for (const auto& kp : frame) row.push_back({kp.x, kp.y, kp.confidence});
    frames.push_back(std::move(row));
  }
  doc["frames"] = std::move(frames);
  return doc.dump();
}

std::string serialize_pose_csv(const PoseSequence& seq) {
  std::ostringstream out;
  out << "# fps=" << format_double(seq.fps) << "\n";
  if (seq.label) out << "# label=" << *seq.label << "\n";
  out << "# topology=" << topology_to_json(seq.topology).dump() << "\n";
  out << "frame,joint,x,y,conf\n";
  for (int t = 0; t < seq.num_frames(); ++t) {
    for (int j = 0; j < seq.num_joints(); ++j) {
      const Keypoint& kp = seq.at(t, j);
      out << t << ',' << j << ',' << format_double(kp.x) << ',' << format_double(kp.y) << ','
          << format_double(kp.confidence) << '\n';
    }
  }
  return out.str();
}

void save_pose_file(const PoseSequence& seq, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PoseError("cannot write pose file '" + path + "'");
  out << (format_from_path(path) == PoseFormat::Csv ? serialize_pose_csv(seq) : serialize_pose_json(seq));
  if (!out) throw PoseError("failed writing pose file '" + path + "'");
}

NormalizedSequence normalize(const PoseSequence& seq) {
  seq.validate();
  const int t_count = seq.num_frames();
  const int m = seq.num_joints();
  const int root = seq.topology.centering_joint();
  const int ra = seq.topology.reference_a;
  const int rb = seq.topology.reference_b;

  int best = 0;
  double best_conf = -1.0;
  for (int t = 0; t < t_count; ++t) {
    const double c = std::min(seq.at(t, ra).confidence, seq.at(t, rb).confidence);
    if (c > best_conf) {
      best_conf = c;
      best = t;
    }
  }
  const double scale = std::hypot(seq.at(best, ra).x - seq.at(best, rb).x, seq.at(best, ra).y - seq.at(best, rb).y);
  if (!(scale >= 1e-6)) throw PoseError("degenerate pose: reference-pair distance below 1e-6");

  NormalizedSequence out;
  out.pose = seq;
  out.scale = scale;
  out.scale_frame = best;
  out.root_offset.resize(2, t_count);
  out.timestamps.resize(t_count);
  for (int t = 0; t < t_count; ++t) {
    const double rx = seq.at(t, root).x;
    const double ry = seq.at(t, root).y;
    out.root_offset(0, t) = rx;
    out.root_offset(1, t) = ry;
    for (int j = 0; j < m; ++j) {
      Keypoint& kp = out.pose.at(t, j);
      kp.x = (seq.at(t, j).x - rx) / scale;
      kp.y = (seq.at(t, j).y - ry) / scale;
    }
    out.timestamps(t) = static_cast<double>(t) / static_cast<double>(t_count - 1);
  }
  return out;
}

std::vector<int> resample_indices(int frames, int target_frames) {
  if (target_frames < 2) throw PoseError("resample target must be >= 2 frames");
  if (frames < 2) throw PoseError("sequence needs at least 2 frames");
  std::vector<int> idx(static_cast<std::size_t>(target_frames));
  const long long span = frames - 1;
  const long long denom = target_frames - 1;
  for (long long k = 0; k < target_frames; ++k) {
    // round-half-up of k * span / denom in exact integer arithmetic
    idx[k] = static_cast<int>((2 * k * span + denom) / (2 * denom));
  }
  return idx;
}

PoseSequence resample(const PoseSequence& seq, int target_frames) {
  const std::vector<int> idx = resample_indices(seq.num_frames(), target_frames);
  PoseSequence out;
  out.topology = seq.topology;
  out.label = seq.label;
  out.fps = seq.fps * static_cast<double>(target_frames - 1) / static_cast<double>(seq.num_frames() - 1);
  if (target_frames == seq.num_frames()) out.fps = seq.fps;
  out.frames.reserve(idx.size());
  for (int i : idx) out.frames.push_back(seq.frames[i]);
  return out;
}

}  // namespace mgract
