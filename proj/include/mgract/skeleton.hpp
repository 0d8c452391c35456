#pragma once

// Pose sequence ingestion: skeleton topology, file parsing, repair,
// body-relative normalisation and uniform resampling.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace mgract {

class PoseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // parent[root] == root
  int reference_a = 0;      // scale reference pair
  int reference_b = 1;

  int size() const { return static_cast<int>(joint_names.size()); }
  int root() const;
  /// Mid-hip when the topology has one, otherwise the tree root.
  int centering_joint() const;
  /// Index of `name`, or -1.
  int find(std::string_view name) const;
  /// Throws PoseError unless parent encodes a single-rooted tree and M >= 2.
  void validate() const;

  bool operator==(const SkeletonTopology&) const = default;
};

/// COCO-17 keypoint order rooted at the left hip:
///   nose, left_eye, right_eye, left_ear, right_ear, left_shoulder,
///   right_shoulder, left_elbow, right_elbow, left_wrist, right_wrist,
///   left_hip, right_hip, left_knee, right_knee, left_ankle, right_ankle.
/// Parents: hips are joined (right_hip -> left_hip), shoulders hang off the
/// same-side hip, arms and legs chain outward, the nose hangs off the left
/// shoulder and the eyes/ears off the nose/eyes. Reference pair: shoulders.
const SkeletonTopology& coco17();

struct Keypoint {
  double x = 0;
  double y = 0;
  double confidence = 0;

  bool operator==(const Keypoint&) const = default;
};

struct PoseSequence {
  double fps = 30.0;
  SkeletonTopology topology;
  std::optional<std::string> label;
  std::vector<std::vector<Keypoint>> frames;  // T x M

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_joints() const { return topology.size(); }
  const Keypoint& at(int t, int joint) const { return frames[t][joint]; }
  Keypoint& at(int t, int joint) { return frames[t][joint]; }
  /// T >= 2, frame widths equal M, finite coordinates, confidence in [0,1].
  void validate() const;
};

struct NormalizedSequence {
  PoseSequence pose;                // centred and scaled coordinates
  Eigen::Matrix2Xd root_offset;     // per-frame subtracted root position (2 x T)
  double scale = 1.0;               // reference-pair distance divided out
  int scale_frame = 0;              // frame the reference distance was taken at
  Eigen::VectorXd timestamps;       // k / (T - 1)

  int num_frames() const { return pose.num_frames(); }
  int num_joints() const { return pose.num_joints(); }
};

enum class PoseFormat { Json, Csv };

struct ParseOptions {
  double confidence_threshold = 0.3;  // keypoints below are treated as missing
};

/// Parses a pose document in the JSON or CSV schema. Missing keypoints
/// (null, non-finite, or below the confidence threshold) are repaired by
/// linear interpolation between the nearest valid frames of the same joint;
/// leading/trailing gaps hold the nearest valid value.
PoseSequence parse_pose(std::string_view text, PoseFormat format, const ParseOptions& opts = {});
PoseSequence load_pose_file(const std::string& path, const ParseOptions& opts = {});
PoseFormat format_from_path(const std::string& path);

std::string serialize_pose_json(const PoseSequence& seq);
std::string serialize_pose_csv(const PoseSequence& seq);
void save_pose_file(const PoseSequence& seq, const std::string& path);

/// Topology from the JSON "topology" field: the string "coco17" or an object
/// {"joints": [...], "parents": [...names or indices...], "reference_pair": [a, b]}.
SkeletonTopology topology_from_json_text(std::string_view text);

/// Replaces missing keypoints in-place (see parse_pose). Throws
/// "unrecoverable joint" when a joint has no valid frame at all.
void repair_missing(PoseSequence& seq, double confidence_threshold);

NormalizedSequence normalize(const PoseSequence& seq);

/// Nearest-index uniform resampling: frame k of the output is input frame
/// round(k (T-1) / (T_target-1)). Endpoints are preserved and fps is
/// rescaled so the clip duration is unchanged.
PoseSequence resample(const PoseSequence& seq, int target_frames);
std::vector<int> resample_indices(int frames, int target_frames);

}  // namespace mgract
