#include "mgract/fusion.hpp"

#include <cmath>

namespace mgract {

std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Interleave: return "interleave";
    case FusionStrategy::Concat: return "concat";
    case FusionStrategy::CrossAttention: return "xattn";
  }
  return "unknown";
}

FusionStrategy parse_fusion_strategy(std::string_view name) {
  if (name == "interleave") return FusionStrategy::Interleave;
  if (name == "concat") return FusionStrategy::Concat;
  if (name == "xattn" || name == "cross_attention") return FusionStrategy::CrossAttention;
  throw FusionError("unknown fusion strategy '" + std::string(name) + "'");
}

void FusionConfig::validate() const {
  if (heads < 1) throw FusionError("heads must be positive");
  if (model_dim < 1) throw FusionError("model_dim must be positive");
  if (model_dim % heads != 0) throw FusionError("model_dim must be divisible by heads");
}

namespace {

void check_shapes(const TokenTensor& joint, const TokenTensor& bone) {
  if (!joint.same_shape(bone)) {
    throw FusionError("stream shape mismatch: joint " + std::to_string(joint.entities()) + "x" +
                      std::to_string(joint.components()) + " vs bone " + std::to_string(bone.entities()) + "x" +
                      std::to_string(bone.components()));
  }
}

void copy_entity(const TokenTensor& src, int se, TokenTensor& dst, int de) {
  for (int k = 0; k < src.components(); ++k) {
    for (int f = 0; f < kTokenWidth; ++f) dst(de, k, f) = src(se, k, f);
  }
}

Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& r, Eigen::MatrixXd& xhat, Eigen::VectorXd& inv_std) {
  const Eigen::Index d = r.cols();
  xhat.resize(r.rows(), d);
  inv_std.resize(r.rows());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double mean = r.row(i).mean();
    const Eigen::RowVectorXd c = r.row(i).array() - mean;
    const double var = c.squaredNorm() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = c * inv_std(i);
  }
  return xhat;
}

}  // namespace

TokenTensor interleave(const TokenTensor& joint, const TokenTensor& bone) {
  check_shapes(joint, bone);
  TokenTensor out(2 * joint.entities(), joint.components());
  for (int e = 0; e < joint.entities(); ++e) {
    copy_entity(joint, e, out, 2 * e);
    copy_entity(bone, e, out, 2 * e + 1);
  }
  return out;
}

TokenTensor concat(const TokenTensor& joint, const TokenTensor& bone) {
  check_shapes(joint, bone);
  const int m = joint.entities();
  TokenTensor out(2 * m, joint.components());
  for (int e = 0; e < m; ++e) {
    copy_entity(joint, e, out, e);
    copy_entity(bone, e, out, m + e);
  }
  return out;
}

std::pair<TokenTensor, TokenTensor> deinterleave(const TokenTensor& fused) {
  if (fused.entities() % 2 != 0) throw FusionError("interleaved tensor needs an even entity count");
  const int m = fused.entities() / 2;
  std::pair<TokenTensor, TokenTensor> out{TokenTensor(m, fused.components()), TokenTensor(m, fused.components())};
  for (int e = 0; e < m; ++e) {
    copy_entity(fused, 2 * e, out.first, e);
    copy_entity(fused, 2 * e + 1, out.second, e);
  }
  return out;
}

void CrossAttentionParams::validate(int input_width) const {
  const int d = model_dim();
  if (heads < 1 || d < 1 || d % heads != 0) throw FusionError("model_dim must be a positive multiple of heads");
  auto expect = [](const Eigen::MatrixXd& m, Eigen::Index r, Eigen::Index c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      throw FusionError(std::string("cross-attention parameter ") + name + " has shape " + std::to_string(m.rows()) +
                        "x" + std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
    }
  };
  expect(joint_in, input_width, d, "joint_in");
  expect(bone_in, input_width, d, "bone_in");
  expect(wq, d, d, "wq");
  expect(wk, d, d, "wk");
  expect(wv, d, d, "wv");
  expect(wo, d, d, "wo");
  expect(ln_gamma, 1, d, "ln_gamma");
  expect(ln_beta, 1, d, "ln_beta");
}

CrossAttentionParams CrossAttentionParams::zeros(int heads, int model_dim, int input_width) {
  CrossAttentionParams p;
  p.heads = heads;
  p.joint_in = Eigen::MatrixXd::Zero(input_width, model_dim);
  p.bone_in = Eigen::MatrixXd::Zero(input_width, model_dim);
  p.wq = Eigen::MatrixXd::Zero(model_dim, model_dim);
  p.wk = Eigen::MatrixXd::Zero(model_dim, model_dim);
  p.wv = Eigen::MatrixXd::Zero(model_dim, model_dim);
  p.wo = Eigen::MatrixXd::Zero(model_dim, model_dim);
  p.ln_gamma = Eigen::MatrixXd::Zero(1, model_dim);
  p.ln_beta = Eigen::MatrixXd::Zero(1, model_dim);
  return p;
}

CrossAttentionParams CrossAttentionParams::random(int heads, int model_dim, std::mt19937_64& rng, int input_width) {
  CrossAttentionParams p = zeros(heads, model_dim, input_width);
  auto fill = [&](Eigen::MatrixXd& m, double fan_in) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  fill(p.joint_in, input_width);
  fill(p.bone_in, input_width);
  fill(p.wq, model_dim);
  fill(p.wk, model_dim);
  fill(p.wv, model_dim);
  fill(p.wo, model_dim);
  p.ln_gamma.setOnes();
  return p;
}

CrossAttentionCache cross_attention_forward(const Eigen::MatrixXd& xj, const Eigen::MatrixXd& xb,
                                            const CrossAttentionParams& p) {
  p.validate(static_cast<int>(xj.cols()));
  if (xj.rows() != xb.rows() || xj.cols() != xb.cols()) throw FusionError("joint/bone token matrices differ in shape");
  const int d = p.model_dim();
  const int dh = d / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  CrossAttentionCache c;
  c.xj = xj;
  c.xb = xb;
  c.pj.noalias() = xj * p.joint_in;
  c.pb.noalias() = xb * p.bone_in;
  c.q.noalias() = c.pj * p.wq;
  c.k.noalias() = c.pb * p.wk;
  c.v.noalias() = c.pb * p.wv;
  c.o.resize(xj.rows(), d);
  c.attention.resize(static_cast<std::size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    Eigen::MatrixXd s = scale * (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    c.o.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
    c.attention[h] = std::move(s);
  }
  const Eigen::MatrixXd r = c.pj + c.o * p.wo;
  layer_norm_rows(r, c.xhat, c.inv_std);
  c.out = (c.xhat.array().rowwise() * p.ln_gamma.row(0).array()).rowwise() + p.ln_beta.row(0).array();
  return c;
}

void cross_attention_backward(const CrossAttentionCache& c, const CrossAttentionParams& p, const Eigen::MatrixXd& dout,
                              CrossAttentionParams& g) {
  const int d = p.model_dim();
  const int dh = d / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  g.ln_gamma.row(0) += (dout.array() * c.xhat.array()).colwise().sum().matrix();
  g.ln_beta.row(0) += dout.colwise().sum();
  const Eigen::MatrixXd dxhat = dout.array().rowwise() * p.ln_gamma.row(0).array();
  Eigen::MatrixXd dr(dxhat.rows(), d);
  for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
    const double mean_d = dxhat.row(i).mean();
    const double mean_dx = dxhat.row(i).dot(c.xhat.row(i)) / static_cast<double>(d);
    dr.row(i) = c.inv_std(i) * (dxhat.row(i).array() - mean_d - c.xhat.row(i).array() * mean_dx).matrix();
  }

  g.wo.noalias() += c.o.transpose() * dr;
  const Eigen::MatrixXd d_o = dr * p.wo.transpose();
  Eigen::MatrixXd dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < p.heads; ++h) {
    const Eigen::MatrixXd& a = c.attention[h];
    const auto doh = d_o.middleCols(h * dh, dh);
    const Eigen::MatrixXd da = doh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = a.transpose() * doh;
    const Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
    const Eigen::MatrixXd ds = (a.array() * (da.array().colwise() - rowdot.array())).matrix() * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  g.wq.noalias() += c.pj.transpose() * dq;
  g.wk.noalias() += c.pb.transpose() * dk;
  g.wv.noalias() += c.pb.transpose() * dv;
  const Eigen::MatrixXd dpj = dr + dq * p.wq.transpose();
  const Eigen::MatrixXd dpb = dk * p.wk.transpose() + dv * p.wv.transpose();
  g.joint_in.noalias() += c.xj.transpose() * dpj;
  g.bone_in.noalias() += c.xb.transpose() * dpb;
}

AttentionOutput cross_attention(const TokenTensor& joint, const TokenTensor& bone, const CrossAttentionParams& p) {
  check_shapes(joint, bone);
  const Eigen::MatrixXd xj = joint.rows();
  const Eigen::MatrixXd xb = bone.rows();
  CrossAttentionCache c = cross_attention_forward(xj, xb, p);
  AttentionOutput out;
  out.features = std::move(c.out);
  out.weights = std::move(c.attention);
  out.entities = joint.entities();
  out.components = joint.components();
  return out;
}

}  // namespace mgract
