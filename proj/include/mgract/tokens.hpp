#pragma once

// Gaussian action tokens: 10-number [mu; s; q] summaries of fitted mixture
// components, stacked into per-stream entity x component tensors.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgract/covariance.hpp"
#include "mgract/gmm.hpp"
#include "mgract/hse.hpp"
#include "mgract/skeleton.hpp"

namespace mgract {

inline constexpr int kTokenWidth = 10;

struct ActionToken {
  Vector3d mu = Vector3d::Zero();
  Vector3d scale = Vector3d::Zero();
  Vector4d quat{1.0, 0.0, 0.0, 0.0};  // (w, x, y, z)

  Eigen::Matrix<double, kTokenWidth, 1> packed() const;
  static ActionToken unpack(std::span<const double> values);
};

/// Entity x component x 10 values, row-major (entity slowest).
class TokenTensor {
 public:
  TokenTensor() = default;
  TokenTensor(int entities, int components);

  int entities() const { return entities_; }
  int components() const { return components_; }
  static constexpr int width() { return kTokenWidth; }
  std::size_t size() const { return values_.size(); }

  double& operator()(int e, int k, int f) { return values_[index(e, k, f)]; }
  double operator()(int e, int k, int f) const { return values_[index(e, k, f)]; }

  void set_token(int e, int k, const ActionToken& token);
  ActionToken token(int e, int k) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// (entities * components) x 10 view, row e * K + k.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, kTokenWidth, Eigen::RowMajor>> rows() const;

  bool same_shape(const TokenTensor& other) const {
    return entities_ == other.entities_ && components_ == other.components_;
  }
  bool operator==(const TokenTensor&) const = default;

 private:
  std::size_t index(int e, int k, int f) const {
    return (static_cast<std::size_t>(e) * components_ + k) * kTokenWidth + f;
  }
  int entities_ = 0;
  int components_ = 0;
  std::vector<double> values_;
};

/// Tokens for every component, ordered by temporal mean (ties broken by the
/// spatial mean, lexicographically).
std::vector<ActionToken> tokens_from_gmm(const GmmModel<double>& model);
/// Component weights in the same order as tokens_from_gmm.
std::vector<double> weights_in_token_order(const GmmModel<double>& model);

struct StreamTokens {
  TokenTensor joint;
  TokenTensor bone;
  Eigen::MatrixXd joint_weights;  // M x K mixture weights (debug export only)
  Eigen::MatrixXd bone_weights;
  double alpha = 1.0;
  int k = 0;
  std::optional<std::string> label;
};

class TokenizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds both streams and fits every entity independently. With
/// mgr.k_range set, BIC picks K per entity and the largest pick is used for
/// the whole clip so both tensors share one K. Entities may be fitted on
/// mgr.threads workers; output order is fixed.
StreamTokens tokenize_sequence(const NormalizedSequence& seq, const HseConfig& hse, const MgrConfig& mgr);

/// Token-file JSON (version 1). `provenance` is embedded verbatim when given.
std::string token_file_json(const StreamTokens& tokens, const std::string& provenance_json = {});
StreamTokens parse_token_file(const std::string& text);
StreamTokens load_token_file(const std::string& path);
void save_token_file(const StreamTokens& tokens, const std::string& path, const std::string& provenance_json = {});

/// Debug dump of raw stream point sets in the token-file layout.
std::string streams_dump_json(const std::vector<StreamPointSet>& joint, const std::vector<StreamPointSet>& bone,
                              double alpha);

}  // namespace mgract
