#pragma once

// Joint/bone stream fusion: parameter-free rearrangements (interleave,
// concat) and a multi-head cross-attention block with a layer-normalised
// residual.

#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mgract/tokens.hpp"

namespace mgract {

class FusionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FusionStrategy { Interleave, Concat, CrossAttention };

std::string to_string(FusionStrategy s);
/// Accepts "interleave", "concat", "xattn" (or "cross_attention").
FusionStrategy parse_fusion_strategy(std::string_view name);

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::Interleave;
  int heads = 4;
  int model_dim = 64;

  void validate() const;
};

/// Entity axis (j1, b1, j2, b2, ..., jM, bM).
TokenTensor interleave(const TokenTensor& joint, const TokenTensor& bone);
/// Entity axis (j1, ..., jM, b1, ..., bM).
TokenTensor concat(const TokenTensor& joint, const TokenTensor& bone);
/// Inverse of interleave: even entities, odd entities.
std::pair<TokenTensor, TokenTensor> deinterleave(const TokenTensor& fused);

struct CrossAttentionParams {
  int heads = 1;
  Eigen::MatrixXd joint_in;  // 10 x d, joint tokens -> model space (residual path)
  Eigen::MatrixXd bone_in;   // 10 x d
  Eigen::MatrixXd wq, wk, wv, wo;  // d x d
  Eigen::MatrixXd ln_gamma, ln_beta;  // 1 x d

  int model_dim() const { return static_cast<int>(joint_in.cols()); }
  void validate(int input_width) const;
  static CrossAttentionParams zeros(int heads, int model_dim, int input_width = kTokenWidth);
  static CrossAttentionParams random(int heads, int model_dim, std::mt19937_64& rng, int input_width = kTokenWidth);
};

struct CrossAttentionCache {
  Eigen::MatrixXd xj, xb;          // inputs, N x 10
  Eigen::MatrixXd pj, pb;          // projected, N x d
  Eigen::MatrixXd q, k, v, o;      // N x d
  std::vector<Eigen::MatrixXd> attention;  // per head, N x N, rows sum to 1
  Eigen::MatrixXd xhat;            // normalised residual
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd out;             // N x d
};

inline constexpr double kLayerNormEps = 1e-5;

/// out = LayerNorm(Xj Wj + MultiHead(Q = Xj Wj Wq, K = Xb Wb Wk, V = Xb Wb Wv)).
/// Rows are flattened (entity, component) tokens.
CrossAttentionCache cross_attention_forward(const Eigen::MatrixXd& xj, const Eigen::MatrixXd& xb,
                                            const CrossAttentionParams& p);

/// Accumulates parameter gradients into `grads` (same shapes as `p`).
void cross_attention_backward(const CrossAttentionCache& cache, const CrossAttentionParams& p,
                              const Eigen::MatrixXd& dout, CrossAttentionParams& grads);

struct AttentionOutput {
  Eigen::MatrixXd features;  // (M*K) x d, row e*K + k
  std::vector<Eigen::MatrixXd> weights;
  int entities = 0;
  int components = 0;
};

AttentionOutput cross_attention(const TokenTensor& joint, const TokenTensor& bone, const CrossAttentionParams& p);

}  // namespace mgract
