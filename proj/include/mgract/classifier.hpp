#pragma once

// Token classifier: per-token affine encoder with ReLU, a kernel-3
// convolution over the entity axis (ReLU), global average pooling over
// (entity, component) and an affine head. Losses are soft-target cross
// entropies; gradients come from a hand-written reverse pass.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mgract/fusion.hpp"
#include "mgract/tokens.hpp"

namespace mgract {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassifierShape {
  FusionStrategy fusion = FusionStrategy::Interleave;
  int entities = 17;   // per stream (M)
  int components = 6;  // K
  int classes = 8;     // C
  int d_tok = 32;
  int d_mix = 64;
  int heads = 4;       // cross-attention only
  int model_dim = 64;  // cross-attention only

  /// Entity count and per-token width seen by the encoder after fusion.
  int fused_entities() const { return fusion == FusionStrategy::CrossAttention ? entities : 2 * entities; }
  int fused_width() const { return fusion == FusionStrategy::CrossAttention ? model_dim : kTokenWidth; }
  void validate() const;
  bool operator==(const ClassifierShape&) const = default;
};

/// Fixed z-scoring of each (entity, component, feature) slot, fitted on
/// training tokens. Identity when empty.
struct InputNormalizer {
  Eigen::MatrixXd joint_mean, joint_scale;  // (M*K) x 10
  Eigen::MatrixXd bone_mean, bone_scale;

  bool empty() const { return joint_mean.size() == 0; }
};

struct ClassifierParams {
  ClassifierShape shape;
  InputNormalizer normalizer;
  CrossAttentionParams attention;  // zero-sized unless fusion == CrossAttention
  Eigen::MatrixXd enc_w;    // width x d_tok
  Eigen::MatrixXd enc_b;    // 1 x d_tok
  Eigen::MatrixXd conv_w0;  // d_tok x d_mix, applied to entity e-1
  Eigen::MatrixXd conv_w1;  // entity e
  Eigen::MatrixXd conv_w2;  // entity e+1
  Eigen::MatrixXd conv_b;   // 1 x d_mix
  Eigen::MatrixXd head_w;   // d_mix x C
  Eigen::MatrixXd head_b;   // 1 x C

  /// Visits every trainable tensor as (name, matrix).
  template <typename F>
  void for_each_tensor(F&& f) {
    if (shape.fusion == FusionStrategy::CrossAttention) {
      f("attn.joint_in", attention.joint_in);
      f("attn.bone_in", attention.bone_in);
      f("attn.wq", attention.wq);
      f("attn.wk", attention.wk);
      f("attn.wv", attention.wv);
      f("attn.wo", attention.wo);
      f("attn.ln_gamma", attention.ln_gamma);
      f("attn.ln_beta", attention.ln_beta);
    }
    f("enc.w", enc_w);
    f("enc.b", enc_b);
    f("conv.w0", conv_w0);
    f("conv.w1", conv_w1);
    f("conv.w2", conv_w2);
    f("conv.b", conv_b);
    f("head.w", head_w);
    f("head.b", head_b);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<ClassifierParams*>(this)->for_each_tensor(
        [&](const char* name, Eigen::MatrixXd& m) { f(name, static_cast<const Eigen::MatrixXd&>(m)); });
  }

  static ClassifierParams zeros(const ClassifierShape& shape);
  /// He-style initialisation from a seeded stream.
  static ClassifierParams random(const ClassifierShape& shape, std::uint64_t seed);
  void validate() const;
  std::size_t parameter_count() const;
};

/// Normalised (M*K) x 10 joint and bone token matrices.
struct ModelInput {
  Eigen::MatrixXd joint;
  Eigen::MatrixXd bone;
};

ModelInput prepare_input(const ClassifierParams& params, const TokenTensor& joint, const TokenTensor& bone);

/// Logits (1 x C) for one sample.
Eigen::RowVectorXd forward(const ClassifierParams& params, const ModelInput& input);
Eigen::RowVectorXd forward(const ClassifierParams& params, const TokenTensor& joint, const TokenTensor& bone);
/// One row of logits per sample.
Eigen::MatrixXd forward_batch(const ClassifierParams& params, const std::vector<ModelInput>& inputs);

Eigen::RowVectorXd log_softmax(const Eigen::RowVectorXd& logits);
Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);
/// -sum_c target_c log softmax(logits)_c
double soft_cross_entropy(const Eigen::RowVectorXd& logits, const Eigen::RowVectorXd& target);
Eigen::RowVectorXd one_hot(int label, int classes);
/// (1 - eps) one_hot + eps / C
Eigen::RowVectorXd smoothed_target(int label, int classes, double eps);

enum class LossKind { CrossEntropy, LabelSmoothing, MixUp };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// Convex combination of two inputs and their label distributions.
struct Mixed {
  ModelInput input;
  Eigen::RowVectorXd target;
};
Mixed mixup_batch(const ModelInput& xi, const Eigen::RowVectorXd& yi, const ModelInput& xj,
                  const Eigen::RowVectorXd& yj, double lambda);
std::pair<TokenTensor, TokenTensor> mixup_tokens(const TokenTensor& joint_i, const TokenTensor& bone_i,
                                                 const TokenTensor& joint_j, const TokenTensor& bone_j, double lambda);

/// One training example. For MixUp, `input` is already mixed and
/// label_b/lambda describe the partner; otherwise label_b is ignored.
struct LossExample {
  ModelInput input;
  int label_a = 0;
  int label_b = 0;
  double lambda = 1.0;
};

struct LossConfig {
  LossKind kind = LossKind::CrossEntropy;
  double smoothing = 0.1;
};

double example_loss(const Eigen::RowVectorXd& logits, const LossExample& ex, const LossConfig& cfg);

struct LossResult {
  double loss = 0;
  ClassifierParams grad;  // same shapes as params
};

/// Mean loss over the batch and its analytic gradient. Samples are
/// accumulated in order, so results are bitwise reproducible.
LossResult loss_and_gradients(const ClassifierParams& params, const std::vector<LossExample>& batch,
                              const LossConfig& cfg);

}  // namespace mgract
