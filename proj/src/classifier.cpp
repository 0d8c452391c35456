#include "mgract/classifier.hpp"

#include <cmath>
#include <random>

namespace mgract {

void ClassifierShape::validate() const {
  if (entities < 1 || components < 1) throw ModelError("classifier needs at least one entity and component");
  if (classes < 2) throw ModelError("classifier needs at least 2 classes");
  if (d_tok < 1 || d_mix < 1) throw ModelError("hidden widths must be positive");
  if (fusion == FusionStrategy::CrossAttention) FusionConfig{fusion, heads, model_dim}.validate();
}

namespace {

void expect_shape(const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* name) {
  if (m.rows() != r || m.cols() != c) {
    throw ModelError(std::string("parameter ") + name + " has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
  }
}

// Fused token matrix: rows are (entity, component) with entity slowest.
Eigen::MatrixXd fuse_rows(const ClassifierShape& s, const ModelInput& in) {
  const Eigen::Index k = s.components;
  const Eigen::Index m = s.entities;
  Eigen::MatrixXd out(2 * m * k, kTokenWidth);
  if (s.fusion == FusionStrategy::Interleave) {
    for (Eigen::Index e = 0; e < m; ++e) {
      out.middleRows(2 * e * k, k) = in.joint.middleRows(e * k, k);
      out.middleRows((2 * e + 1) * k, k) = in.bone.middleRows(e * k, k);
    }
  } else {
    out.topRows(m * k) = in.joint;
    out.bottomRows(m * k) = in.bone;
  }
  return out;
}

struct ForwardCache {
  CrossAttentionCache attention;
  Eigen::MatrixXd x;       // fused tokens, n x width
  Eigen::MatrixXd enc;     // encoder pre-activation, n x d_tok
  Eigen::MatrixXd h;       // relu(enc)
  Eigen::MatrixXd conv;    // mixer pre-activation, n x d_mix
  Eigen::RowVectorXd pooled;
  Eigen::RowVectorXd logits;
};

ForwardCache run_forward(const ClassifierParams& p, const ModelInput& in) {
  const ClassifierShape& s = p.shape;
  const Eigen::Index rows = static_cast<Eigen::Index>(s.entities) * s.components;
  if (in.joint.rows() != rows || in.bone.rows() != rows || in.joint.cols() != kTokenWidth ||
      in.bone.cols() != kTokenWidth) {
    throw ModelError("input tokens do not match classifier shape " + std::to_string(s.entities) + "x" +
                     std::to_string(s.components) + "x10");
  }
  ForwardCache c;
  if (s.fusion == FusionStrategy::CrossAttention) {
    c.attention = cross_attention_forward(in.joint, in.bone, p.attention);
    c.x = c.attention.out;
  } else {
    c.x = fuse_rows(s, in);
  }
  const Eigen::Index n = c.x.rows();
  const Eigen::Index k = s.components;
  c.enc.noalias() = c.x * p.enc_w;
  c.enc.rowwise() += p.enc_b.row(0);
  c.h = c.enc.cwiseMax(0.0);

  c.conv.noalias() = c.h * p.conv_w1;
  c.conv.rowwise() += p.conv_b.row(0);
  if (n > k) {
    c.conv.bottomRows(n - k).noalias() += c.h.topRows(n - k) * p.conv_w0;
    c.conv.topRows(n - k).noalias() += c.h.bottomRows(n - k) * p.conv_w2;
  }
  c.pooled = c.conv.cwiseMax(0.0).colwise().mean();
  c.logits = c.pooled * p.head_w + p.head_b.row(0);
  return c;
}

// Back-propagates dlogits through the cached forward pass into g.
void run_backward(const ClassifierParams& p, const ForwardCache& c, const Eigen::RowVectorXd& dlogits,
                  ClassifierParams& g) {
  const Eigen::Index n = c.x.rows();
  const Eigen::Index k = p.shape.components;
  g.head_w.noalias() += c.pooled.transpose() * dlogits;
  g.head_b.row(0) += dlogits;
  const Eigen::RowVectorXd dpooled = dlogits * p.head_w.transpose();

  Eigen::MatrixXd dconv(n, dpooled.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index j = 0; j < dconv.cols(); ++j) dconv(r, j) = c.conv(r, j) > 0.0 ? dpooled(j) * inv_n : 0.0;
  }
  g.conv_b.row(0) += dconv.colwise().sum();
  g.conv_w1.noalias() += c.h.transpose() * dconv;
  Eigen::MatrixXd dh = dconv * p.conv_w1.transpose();
  if (n > k) {
    g.conv_w0.noalias() += c.h.topRows(n - k).transpose() * dconv.bottomRows(n - k);
    g.conv_w2.noalias() += c.h.bottomRows(n - k).transpose() * dconv.topRows(n - k);
    dh.topRows(n - k).noalias() += dconv.bottomRows(n - k) * p.conv_w0.transpose();
    dh.bottomRows(n - k).noalias() += dconv.topRows(n - k) * p.conv_w2.transpose();
  }
  const Eigen::MatrixXd denc = (c.enc.array() > 0.0).select(dh, 0.0);
  g.enc_b.row(0) += denc.colwise().sum();
  g.enc_w.noalias() += c.x.transpose() * denc;
  if (p.shape.fusion == FusionStrategy::CrossAttention) {
    const Eigen::MatrixXd dx = denc * p.enc_w.transpose();
    cross_attention_backward(c.attention, p.attention, dx, g.attention);
  }
}

}  // namespace

ClassifierParams ClassifierParams::zeros(const ClassifierShape& shape) {
  shape.validate();
  ClassifierParams p;
  p.shape = shape;
  const int width = shape.fused_width();
  if (shape.fusion == FusionStrategy::CrossAttention) {
    p.attention = CrossAttentionParams::zeros(shape.heads, shape.model_dim);
  } else {
    p.attention.heads = 1;
  }
  p.enc_w = Eigen::MatrixXd::Zero(width, shape.d_tok);
  p.enc_b = Eigen::MatrixXd::Zero(1, shape.d_tok);
  p.conv_w0 = Eigen::MatrixXd::Zero(shape.d_tok, shape.d_mix);
  p.conv_w1 = Eigen::MatrixXd::Zero(shape.d_tok, shape.d_mix);
  p.conv_w2 = Eigen::MatrixXd::Zero(shape.d_tok, shape.d_mix);
  p.conv_b = Eigen::MatrixXd::Zero(1, shape.d_mix);
  p.head_w = Eigen::MatrixXd::Zero(shape.d_mix, shape.classes);
  p.head_b = Eigen::MatrixXd::Zero(1, shape.classes);
  return p;
}

ClassifierParams ClassifierParams::random(const ClassifierShape& shape, std::uint64_t seed) {
  ClassifierParams p = zeros(shape);
  std::mt19937_64 rng(seed);
  if (shape.fusion == FusionStrategy::CrossAttention) {
    p.attention = CrossAttentionParams::random(shape.heads, shape.model_dim, rng);
  }
  auto he = [&](Eigen::MatrixXd& m, double fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  he(p.enc_w, shape.fused_width());
  he(p.conv_w0, 3.0 * shape.d_tok);
  he(p.conv_w1, 3.0 * shape.d_tok);
  he(p.conv_w2, 3.0 * shape.d_tok);
  std::normal_distribution<double> head(0.0, std::sqrt(1.0 / shape.d_mix));
  for (Eigen::Index i = 0; i < p.head_w.size(); ++i) p.head_w.data()[i] = head(rng);
  return p;
}

void ClassifierParams::validate() const {
  shape.validate();
  const int width = shape.fused_width();
  if (shape.fusion == FusionStrategy::CrossAttention) attention.validate(kTokenWidth);
  expect_shape(enc_w, width, shape.d_tok, "enc.w");
  expect_shape(enc_b, 1, shape.d_tok, "enc.b");
  expect_shape(conv_w0, shape.d_tok, shape.d_mix, "conv.w0");
  expect_shape(conv_w1, shape.d_tok, shape.d_mix, "conv.w1");
  expect_shape(conv_w2, shape.d_tok, shape.d_mix, "conv.w2");
  expect_shape(conv_b, 1, shape.d_mix, "conv.b");
  expect_shape(head_w, shape.d_mix, shape.classes, "head.w");
  expect_shape(head_b, 1, shape.classes, "head.b");
  bool finite = true;
  for_each_tensor([&](const char*, const Eigen::MatrixXd& m) { finite = finite && m.allFinite(); });
  if (!finite) throw ModelError("classifier parameters contain non-finite values");
  if (!normalizer.empty()) {
    const Eigen::Index rows = static_cast<Eigen::Index>(shape.entities) * shape.components;
    expect_shape(normalizer.joint_mean, rows, kTokenWidth, "normalizer.joint_mean");
    expect_shape(normalizer.joint_scale, rows, kTokenWidth, "normalizer.joint_scale");
    expect_shape(normalizer.bone_mean, rows, kTokenWidth, "normalizer.bone_mean");
    expect_shape(normalizer.bone_scale, rows, kTokenWidth, "normalizer.bone_scale");
  }
}

std::size_t ClassifierParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor([&](const char*, const Eigen::MatrixXd& m) { total += static_cast<std::size_t>(m.size()); });
  return total;
}

ModelInput prepare_input(const ClassifierParams& params, const TokenTensor& joint, const TokenTensor& bone) {
  const ClassifierShape& s = params.shape;
  if (!joint.same_shape(bone)) throw ModelError("joint and bone token tensors differ in shape");
  if (joint.entities() != s.entities || joint.components() != s.components) {
    throw ModelError("token tensor " + std::to_string(joint.entities()) + "x" + std::to_string(joint.components()) +
                     " does not match classifier " + std::to_string(s.entities) + "x" + std::to_string(s.components));
  }
  ModelInput in{joint.rows(), bone.rows()};
  if (!in.joint.allFinite() || !in.bone.allFinite()) throw ModelError("token tensor contains non-finite values");
  if (!params.normalizer.empty()) {
    const InputNormalizer& nz = params.normalizer;
    in.joint = ((in.joint - nz.joint_mean).array() / nz.joint_scale.array()).matrix();
    in.bone = ((in.bone - nz.bone_mean).array() / nz.bone_scale.array()).matrix();
  }
  return in;
}

Eigen::RowVectorXd forward(const ClassifierParams& params, const ModelInput& input) {
  return run_forward(params, input).logits;
}

Eigen::RowVectorXd forward(const ClassifierParams& params, const TokenTensor& joint, const TokenTensor& bone) {
  return forward(params, prepare_input(params, joint, bone));
}

Eigen::MatrixXd forward_batch(const ClassifierParams& params, const std::vector<ModelInput>& inputs) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(inputs.size()), params.shape.classes);
  for (std::size_t i = 0; i < inputs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = forward(params, inputs[i]);
  return out;
}

Eigen::RowVectorXd log_softmax(const Eigen::RowVectorXd& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
  const Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double soft_cross_entropy(const Eigen::RowVectorXd& logits, const Eigen::RowVectorXd& target) {
  if (logits.size() != target.size()) throw ModelError("target width does not match logits");
  const Eigen::RowVectorXd lp = log_softmax(logits);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < lp.size(); ++c) {
    if (target(c) != 0.0) loss -= target(c) * lp(c);
  }
  return loss;
}

Eigen::RowVectorXd one_hot(int label, int classes) {
  if (label < 0 || label >= classes) throw ModelError("label out of range");
  Eigen::RowVectorXd t = Eigen::RowVectorXd::Zero(classes);
  t(label) = 1.0;
  return t;
}

Eigen::RowVectorXd smoothed_target(int label, int classes, double eps) {
  if (eps == 0.0) return one_hot(label, classes);
  return (1.0 - eps) * one_hot(label, classes).array() + eps / static_cast<double>(classes);
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: return "cross_entropy";
    case LossKind::LabelSmoothing: return "label_smoothing";
    case LossKind::MixUp: return "mixup";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cross_entropy" || name == "ce") return LossKind::CrossEntropy;
  if (name == "label_smoothing" || name == "ls") return LossKind::LabelSmoothing;
  if (name == "mixup") return LossKind::MixUp;
  throw ModelError("unknown loss '" + std::string(name) + "'");
}

Mixed mixup_batch(const ModelInput& xi, const Eigen::RowVectorXd& yi, const ModelInput& xj,
                  const Eigen::RowVectorXd& yj, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ModelError("mixup lambda must lie in [0,1]");
  if (xi.joint.rows() != xj.joint.rows() || xi.joint.cols() != xj.joint.cols() || xi.bone.rows() != xj.bone.rows() ||
      xi.bone.cols() != xj.bone.cols() || yi.size() != yj.size()) {
    throw ModelError("mixup operands differ in shape");
  }
  Mixed out;
  out.input.joint = lambda * xi.joint + (1.0 - lambda) * xj.joint;
  out.input.bone = lambda * xi.bone + (1.0 - lambda) * xj.bone;
  out.target = lambda * yi + (1.0 - lambda) * yj;
  return out;
}

std::pair<TokenTensor, TokenTensor> mixup_tokens(const TokenTensor& joint_i, const TokenTensor& bone_i,
                                                 const TokenTensor& joint_j, const TokenTensor& bone_j, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ModelError("mixup lambda must lie in [0,1]");
  if (!joint_i.same_shape(joint_j) || !bone_i.same_shape(bone_j)) throw ModelError("mixup operands differ in shape");
  std::pair<TokenTensor, TokenTensor> out{joint_i, bone_i};
  auto mix = [&](std::span<double> dst, std::span<const double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  };
  mix(out.first.values(), joint_i.values(), joint_j.values());
  mix(out.second.values(), bone_i.values(), bone_j.values());
  return out;
}

double example_loss(const Eigen::RowVectorXd& logits, const LossExample& ex, const LossConfig& cfg) {
  const int c = static_cast<int>(logits.size());
  switch (cfg.kind) {
    case LossKind::CrossEntropy: return soft_cross_entropy(logits, one_hot(ex.label_a, c));
    case LossKind::LabelSmoothing: return soft_cross_entropy(logits, smoothed_target(ex.label_a, c, cfg.smoothing));
    case LossKind::MixUp:
      return ex.lambda * soft_cross_entropy(logits, one_hot(ex.label_a, c)) +
             (1.0 - ex.lambda) * soft_cross_entropy(logits, one_hot(ex.label_b, c));
  }
  throw ModelError("unknown loss kind");
}

LossResult loss_and_gradients(const ClassifierParams& params, const std::vector<LossExample>& batch,
                              const LossConfig& cfg) {
  if (batch.empty()) throw ModelError("empty batch");
  LossResult out;
  out.grad = ClassifierParams::zeros(params.shape);
  const int c = params.shape.classes;
  for (const LossExample& ex : batch) {
    const ForwardCache cache = run_forward(params, ex.input);
    out.loss += example_loss(cache.logits, ex, cfg);
    const Eigen::RowVectorXd p = softmax(cache.logits);
    Eigen::RowVectorXd dlogits;
    switch (cfg.kind) {
      case LossKind::CrossEntropy: dlogits = p - one_hot(ex.label_a, c); break;
      case LossKind::LabelSmoothing: dlogits = p - smoothed_target(ex.label_a, c, cfg.smoothing); break;
      case LossKind::MixUp:
        dlogits = ex.lambda * (p - one_hot(ex.label_a, c)) + (1.0 - ex.lambda) * (p - one_hot(ex.label_b, c));
        break;
    }
    run_backward(params, cache, dlogits, out.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  if (!std::isfinite(out.loss)) throw ModelError("non-finite loss");
  out.grad.for_each_tensor([&](const char*, Eigen::MatrixXd& m) { m *= inv; });
  return out;
}

}  // namespace mgract
