#pragma once

// Dual-stream spatial encoding: joint Cartesian (x, y, alpha t) point sets
// and bone vector (dr, theta, alpha t) point sets, one per entity.

#include <stdexcept>
#include <string>
#include <vector>

#include "mgract/linalg.hpp"
#include "mgract/skeleton.hpp"

namespace mgract {

enum class StreamKind { JointCartesian, BoneVector, JointPolar };

std::string to_string(StreamKind kind);

struct HseConfig {
  double alpha = 1.0;  // time-axis scale factor
  bool unwrap_angles = true;

  void validate() const {
    if (!(alpha > 0)) throw std::invalid_argument("alpha must be > 0");
  }
};

struct StreamPointSet {
  int entity = 0;
  StreamKind kind = StreamKind::JointCartesian;
  Points3d points;  // T x 3, third column strictly increasing
};

std::vector<StreamPointSet> build_joint_stream(const NormalizedSequence& seq, const HseConfig& cfg);

/// One bone per joint: joint i paired with its parent. The root carries the
/// zero bone so bone and joint counts match.
std::vector<StreamPointSet> build_bone_stream(const NormalizedSequence& seq, const SkeletonTopology& topology,
                                              const HseConfig& cfg);

/// Joint positions as (r, theta, alpha t) about the centring joint, never
/// unwrapped. Kept for the wraparound ablation.
std::vector<StreamPointSet> build_polar_joint_stream(const NormalizedSequence& seq, const HseConfig& cfg);

/// Continuous phase from wrapped angles: each step is replaced by its
/// representative in (-pi, pi].
Eigen::VectorXd unwrap_angles(const Eigen::VectorXd& wrapped);

}  // namespace mgract
