#pragma once

// Reference computations shared by the unit and acceptance suites. They are
// written the slow, obvious way on purpose.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "mgract/classifier.hpp"
#include "mgract/gmm.hpp"

namespace oracle {

using mgract::Matrix3d;
using mgract::Points3d;
using mgract::Vector3d;

inline Matrix3d random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix3d a;
  for (int i = 0; i < 9; ++i) a(i) = g(rng);
  return a * a.transpose() + 1e-3 * Matrix3d::Identity();
}

/// sum_n log sum_k pi_k N(x_n | mu_k, Sigma_k) with densities evaluated
/// directly from the determinant and inverse.
inline double brute_force_loglik(const mgract::GmmModel<double>& model, const Points3d& x) {
  double total = 0;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    double density = 0;
    for (const auto& c : model.components) {
      const Vector3d d = x.row(n).transpose() - c.mean;
      const double quad = d.dot(c.covariance.inverse() * d);
      density += c.weight * std::exp(-0.5 * quad) / std::sqrt(std::pow(2 * mgract::kPi, 3) * c.covariance.determinant());
    }
    total += std::log(density);
  }
  return total;
}

struct Mixture {
  Points3d points;
  std::array<Vector3d, 3> means;
};

/// 300 points, 100 per component, isotropic sigma 0.1 with means at least
/// 5 sigma apart. Points are ordered by component.
inline Mixture well_separated(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.1);
  Mixture m;
  for (;;) {
    for (auto& mu : m.means) mu = Vector3d(u(rng), u(rng), u(rng)) * 2.0;
    bool ok = true;
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) ok = ok && (m.means[a] - m.means[b]).norm() >= 0.5;
    if (ok) break;
  }
  m.points.resize(300, 3);
  for (int n = 0; n < 300; ++n) {
    const Vector3d& mu = m.means[n / 100];
    m.points.row(n) = (mu + Vector3d(g(rng), g(rng), g(rng))).transpose();
  }
  return m;
}

/// Three clusters stacked along the time axis (column 2), so temporal-bin
/// initialisation starts each component on its own cluster and unfloored EM
/// stays well posed.
inline Points3d time_ordered(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Points3d p(300, 3);
  for (int c = 0; c < 3; ++c) {
    const Vector3d mu(u(rng), u(rng), 0.2 + 0.3 * c);
    for (int i = 0; i < 100; ++i) p.row(c * 100 + i) = (mu + Vector3d(0.1 * g(rng), 0.1 * g(rng), 0.04 * g(rng))).transpose();
  }
  return p;
}

/// Largest mean error under the best of the 3! component matchings.
inline double matched_mean_error(const mgract::GmmModel<double>& model, const std::array<Vector3d, 3>& truth) {
  std::array<int, 3> perm{0, 1, 2};
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, (model.components[perm[i]].mean - truth[i]).norm());
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// k-means++ seeding from the data alone, then the moments of the hard
/// nearest-seed partition.
inline mgract::GmmModel<double> kmeanspp_start(const Points3d& x, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<Eigen::Index> first(0, x.rows() - 1);
  std::vector<Eigen::Index> seeds{first(rng)};
  Eigen::VectorXd dist = (x.rowwise() - x.row(seeds[0])).rowwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < k) {
    std::discrete_distribution<Eigen::Index> pick(dist.data(), dist.data() + dist.size());
    seeds.push_back(pick(rng));
    dist = dist.cwiseMin((x.rowwise() - x.row(seeds.back())).rowwise().squaredNorm());
  }
  std::vector<std::vector<Eigen::Index>> members(k);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    int best = 0;
    for (int c = 1; c < k; ++c) {
      if ((x.row(n) - x.row(seeds[c])).squaredNorm() < (x.row(n) - x.row(seeds[best])).squaredNorm()) best = c;
    }
    members[best].push_back(n);
  }
  mgract::GmmModel<double> m;
  for (int c = 0; c < k; ++c) {
    Vector3d mean = Vector3d::Zero();
    for (auto n : members[c]) mean += x.row(n).transpose();
    mean /= double(members[c].size());
    Matrix3d cov = 1e-4 * Matrix3d::Identity();
    for (auto n : members[c]) cov += (x.row(n).transpose() - mean) * (x.row(n).transpose() - mean).transpose() / double(members[c].size());
    m.components.push_back({double(members[c].size()) / double(x.rows()), mean, cov});
  }
  return m;
}

/// Highest-likelihood fit over the library's temporal start and `restarts`
/// seeded k-means++ starts. Nothing here looks at the generating means.
inline mgract::GmmModel<double> best_fit(const Points3d& x, const mgract::MgrConfig& cfg, int restarts = 20) {
  mgract::GmmModel<double> best = mgract::fit_gmm(x, cfg);
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  for (int r = 0; r < restarts; ++r) {
    auto m = mgract::fit_gmm_from(kmeanspp_start(x, cfg.k, rng), x, cfg);
    if (m.final_loglik > best.final_loglik) best = std::move(m);
  }
  return best;
}

struct GradientFixture {
  mgract::ClassifierParams params;
  std::vector<mgract::LossExample> batch;
  mgract::LossConfig loss;
};

/// Small seeded classifier problem. Fixture 0 uses interleave fusion with
/// cross entropy, 1 concat with label smoothing, 2 cross-attention with
/// MixUp.
inline GradientFixture gradient_fixture(int which, std::uint64_t seed) {
  using namespace mgract;
  ClassifierShape shape;
  shape.fusion = which == 0 ? FusionStrategy::Interleave
               : which == 1 ? FusionStrategy::Concat
                            : FusionStrategy::CrossAttention;
  shape.entities = 3;
  shape.components = 2;
  shape.classes = 4;
  shape.d_tok = 5;
  shape.d_mix = 6;
  shape.heads = 2;
  shape.model_dim = 4;
  GradientFixture f;
  f.params = ClassifierParams::random(shape, seed);
  // Zero-initialised biases leave dead rows exactly on a relu kink, where
  // central differences average the one-sided slopes. Jitter everything.
  std::mt19937_64 jitter(seed ^ 0x5bd1e995);
  std::normal_distribution<double> n01(0.0, 0.1);
  f.params.for_each_tensor([&](const char*, Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) += n01(jitter);
  });
  f.loss.kind = which == 0 ? LossKind::CrossEntropy : which == 1 ? LossKind::LabelSmoothing : LossKind::MixUp;
  f.loss.smoothing = 0.1;
  std::mt19937_64 rng(seed * 31 + 7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int b = 0; b < 3; ++b) {
    LossExample ex;
    ex.input.joint.resize(6, kTokenWidth);
    ex.input.bone.resize(6, kTokenWidth);
    for (Eigen::Index i = 0; i < ex.input.joint.size(); ++i) ex.input.joint(i) = g(rng);
    for (Eigen::Index i = 0; i < ex.input.bone.size(); ++i) ex.input.bone(i) = g(rng);
    ex.label_a = b % 4;
    ex.label_b = (b + 2) % 4;
    ex.lambda = f.loss.kind == LossKind::MixUp ? 0.3 + 0.2 * b : 1.0;
    f.batch.push_back(std::move(ex));
  }
  return f;
}

struct GradientReport {
  double worst_relative = 0;
  std::size_t checked = 0;
};

/// Central differences over every parameter entry, compared elementwise as
/// |a - n| / max(|a|, |n|, denom_floor).
inline GradientReport check_gradients(const GradientFixture& f, double h = 1e-5, double denom_floor = 1e-6) {
  using namespace mgract;
  const LossResult analytic = loss_and_gradients(f.params, f.batch, f.loss);
  std::vector<const Eigen::MatrixXd*> grads;
  analytic.grad.for_each_tensor([&](const char*, const Eigen::MatrixXd& m) { grads.push_back(&m); });
  ClassifierParams probe = f.params;
  std::vector<Eigen::MatrixXd*> tensors;
  probe.for_each_tensor([&](const char*, Eigen::MatrixXd& m) { tensors.push_back(&m); });
  GradientReport report;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Eigen::MatrixXd& m = *tensors[t];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double keep = m(i);
      m(i) = keep + h;
      const double up = loss_and_gradients(probe, f.batch, f.loss).loss;
      m(i) = keep - h;
      const double down = loss_and_gradients(probe, f.batch, f.loss).loss;
      m(i) = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = (*grads[t])(i);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
      report.worst_relative = std::max(report.worst_relative, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace oracle
