#include "mgract/hse.hpp"

#include <cmath>

namespace mgract {

namespace {

// Representative of `d` in (-pi, pi].
double wrap_step(double d) {
  double r = std::remainder(d, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

constexpr double kCoincident = 1e-12;

}  // namespace

std::string to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::JointCartesian: return "joint";
    case StreamKind::BoneVector: return "bone";
    case StreamKind::JointPolar: return "joint_polar";
  }
  return "unknown";
}

Eigen::VectorXd unwrap_angles(const Eigen::VectorXd& wrapped) {
  Eigen::VectorXd out = wrapped;
  for (Eigen::Index t = 1; t < wrapped.size(); ++t) {
    out(t) = out(t - 1) + wrap_step(wrapped(t) - wrapped(t - 1));
  }
  return out;
}

std::vector<StreamPointSet> build_joint_stream(const NormalizedSequence& seq, const HseConfig& cfg) {
  cfg.validate();
  const int t_count = seq.num_frames();
  const int m = seq.num_joints();
  std::vector<StreamPointSet> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    StreamPointSet& s = out[j];
    s.entity = j;
    s.kind = StreamKind::JointCartesian;
    s.points.resize(t_count, 3);
    for (int t = 0; t < t_count; ++t) {
      const Keypoint& kp = seq.pose.at(t, j);
      s.points(t, 0) = kp.x;
      s.points(t, 1) = kp.y;
      s.points(t, 2) = cfg.alpha * seq.timestamps(t);
    }
  }
  return out;
}

std::vector<StreamPointSet> build_bone_stream(const NormalizedSequence& seq, const SkeletonTopology& topology,
                                              const HseConfig& cfg) {
  cfg.validate();
  topology.validate();
  if (topology.size() != seq.num_joints()) throw std::invalid_argument("topology does not match sequence");
  const int t_count = seq.num_frames();
  const int m = seq.num_joints();
  std::vector<StreamPointSet> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    StreamPointSet& s = out[j];
    s.entity = j;
    s.kind = StreamKind::BoneVector;
    s.points.resize(t_count, 3);
    const int p = topology.parent[j];
    Eigen::VectorXd theta(t_count);
    double carried = 0.0;
    for (int t = 0; t < t_count; ++t) {
      double dr = 0.0;
      double th = 0.0;
      if (p != j) {
        const double dx = seq.pose.at(t, j).x - seq.pose.at(t, p).x;
        const double dy = seq.pose.at(t, j).y - seq.pose.at(t, p).y;
        dr = std::hypot(dx, dy);
        th = dr > kCoincident ? std::atan2(dy, dx) : carried;
        if (dr <= kCoincident) dr = 0.0;
      }
      carried = th;
      s.points(t, 0) = dr;
      theta(t) = th;
      s.points(t, 2) = cfg.alpha * seq.timestamps(t);
    }
    s.points.col(1) = cfg.unwrap_angles ? unwrap_angles(theta) : theta;
  }
  return out;
}

std::vector<StreamPointSet> build_polar_joint_stream(const NormalizedSequence& seq, const HseConfig& cfg) {
  cfg.validate();
  const int t_count = seq.num_frames();
  const int m = seq.num_joints();
  const int root = seq.pose.topology.centering_joint();
  std::vector<StreamPointSet> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    StreamPointSet& s = out[j];
    s.entity = j;
    s.kind = StreamKind::JointPolar;
    s.points.resize(t_count, 3);
    for (int t = 0; t < t_count; ++t) {
      const double dx = seq.pose.at(t, j).x - seq.pose.at(t, root).x;
      const double dy = seq.pose.at(t, j).y - seq.pose.at(t, root).y;
      const double r = std::hypot(dx, dy);
      s.points(t, 0) = r > kCoincident ? r : 0.0;
      s.points(t, 1) = r > kCoincident ? std::atan2(dy, dx) : 0.0;
      s.points(t, 2) = cfg.alpha * seq.timestamps(t);
    }
  }
  return out;
}

}  // namespace mgract
