#pragma once

// Expectation-maximisation for K-component Gaussian mixtures over 3D
// spatiotemporal point sets.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "mgract/covariance.hpp"
#include "mgract/linalg.hpp"

namespace mgract {

class GmmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KRange {
  int lo = 2;
  int hi = 10;
};

struct MgrConfig {
  int k = 6;
  std::optional<KRange> k_range;  // BIC selection when set
  int max_iter = 200;
  double tol = 1e-6;
  // Covariance floor = eps_floor_rel * (mean per-axis variance of the point
  // set), unless eps_floor overrides it with an absolute value. Fitted
  // covariances keep every eigenvalue at or above the floor.
  double eps_floor_rel = 1e-6;
  std::optional<double> eps_floor;
  int threads = 1;

  void validate() const {
    if (k < 1) throw GmmError("k must be >= 1");
    if (!(tol > 0)) throw GmmError("tol must be > 0");
    if (max_iter < 1) throw GmmError("max_iter must be >= 1");
    if (k_range && (k_range->lo < 1 || k_range->hi < k_range->lo)) throw GmmError("invalid k range");
    if (eps_floor && !(*eps_floor >= 0)) throw GmmError("eps_floor must be >= 0");
  }
};

template <typename Scalar>
struct GaussianComponent {
  Scalar weight = 0;
  Vector3<Scalar> mean = Vector3<Scalar>::Zero();
  Matrix3<Scalar> covariance = Matrix3<Scalar>::Identity();
};

template <typename Scalar>
struct GmmModel {
  std::vector<GaussianComponent<Scalar>> components;
  Scalar final_loglik = 0;
  int iterations = 0;
  int reseeds = 0;  // components re-seeded after collapse
  bool converged = false;
  std::vector<Scalar> loglik_trace;  // pre-update log-likelihood of every EM step

  int k() const { return static_cast<int>(components.size()); }
};

template <typename Scalar>
struct EmStepResult {
  GmmModel<Scalar> model;
  Scalar loglik = 0;  // data log-likelihood under the input model
};

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <typename Scalar>
Matrix3<Scalar> weighted_scatter(const PointMatrix<Scalar>& points, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w,
                                 const Vector3<Scalar>& mean) {
  Matrix3<Scalar> acc = Matrix3<Scalar>::Zero();
  for (Eigen::Index n = 0; n < points.rows(); ++n) {
    const Vector3<Scalar> d = points.row(n).transpose() - mean;
    acc.noalias() += w(n) * (d * d.transpose());
  }
  return acc;
}

/// Raises every eigenvalue of a symmetric PSD matrix to at least `floor`.
/// This is the maximiser of the M-step objective under the constraint
/// Sigma >= floor * I, so floored EM keeps its monotone likelihood.
template <typename Scalar>
Matrix3<Scalar> clamp_eigenvalues(const Matrix3<Scalar>& cov, Scalar floor) {
  if (!(floor > Scalar(0))) return cov;
  Eigen::LLT<Matrix3<Scalar>> above(cov - floor * Matrix3<Scalar>::Identity());
  if (above.info() == Eigen::Success) return cov;
  const SymmetricEigen3<Scalar> eig = jacobi_eigen(cov);
  const Vector3<Scalar> clamped = eig.values.cwiseMax(floor);
  Matrix3<Scalar> out = eig.vectors * clamped.asDiagonal() * eig.vectors.transpose();
  return Scalar(0.5) * (out + out.transpose());
}

}  // namespace detail

/// Covariance floor for a point set under `cfg`.
template <typename Scalar>
Scalar covariance_floor(const PointMatrix<Scalar>& points, const MgrConfig& cfg) {
  if (cfg.eps_floor) return Scalar(*cfg.eps_floor);
  const Eigen::Index n = points.rows();
  const Vector3<Scalar> mean = points.colwise().mean().transpose();
  const Scalar var = (points.rowwise() - mean.transpose()).squaredNorm() / Scalar(n * 3);
  return Scalar(cfg.eps_floor_rel) * var;
}

/// Per-point, per-component log of pi_k N(x_n | mu_k, Sigma_k).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weighted_log_densities(const GmmModel<Scalar>& model,
                                                                              const PointMatrix<Scalar>& points) {
  const Eigen::Index n = points.rows();
  const int k = model.k();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(n, k);
  for (int c = 0; c < k; ++c) {
    const auto& comp = model.components[c];
    Eigen::LLT<Matrix3<Scalar>> llt(comp.covariance);
    if (llt.info() != Eigen::Success) throw GmmError("covariance of component " + std::to_string(c) + " is not SPD");
    const Matrix3<Scalar> l = llt.matrixL();
    const Scalar log_det = Scalar(2) * l.diagonal().array().log().sum();
    const Scalar log_weight = comp.weight > 0 ? std::log(comp.weight) : -std::numeric_limits<Scalar>::infinity();
    const Scalar base = log_weight - Scalar(0.5) * (Scalar(3 * detail::kLog2Pi) + log_det);
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> centered = (points.rowwise() - comp.mean.transpose()).transpose();
    l.template triangularView<Eigen::Lower>().solveInPlace(centered);
    out.col(c) = (base - Scalar(0.5) * centered.colwise().squaredNorm().array()).matrix().transpose();
  }
  return out;
}

/// Mixture log-likelihood sum_n log sum_k pi_k N(x_n | mu_k, Sigma_k),
/// evaluated with a per-row log-sum-exp.
template <typename Scalar>
Scalar log_likelihood(const GmmModel<Scalar>& model, const PointMatrix<Scalar>& points) {
  const auto logd = weighted_log_densities(model, points);
  Scalar total = 0;
  for (Eigen::Index n = 0; n < logd.rows(); ++n) {
    const Scalar m = logd.row(n).maxCoeff();
    total += m + std::log((logd.row(n).array() - m).exp().sum());
  }
  return total;
}

/// Deterministic start: split the time axis into K equal bins and take
/// per-bin sample moments, uniform weights. Falls back to equal-count
/// segments of the time-sorted points when some bin is empty.
template <typename Scalar>
GmmModel<Scalar> initialize_temporal(const PointMatrix<Scalar>& points, int k, Scalar floor) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw GmmError("k must be >= 1");
  if (n < k) throw GmmError("insufficient points: " + std::to_string(n) + " < k=" + std::to_string(k));

  const Scalar t0 = points.col(2).minCoeff();
  const Scalar t1 = points.col(2).maxCoeff();
  std::vector<int> bin(static_cast<std::size_t>(n));
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  const Scalar span = t1 - t0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int b = span > 0 ? static_cast<int>(std::floor((points(i, 2) - t0) / span * Scalar(k))) : 0;
    b = std::clamp(b, 0, k - 1);
    bin[i] = b;
    ++counts[b];
  }
  if (std::find(counts.begin(), counts.end(), 0) != counts.end()) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return points(a, 2) < points(b, 2); });
    for (Eigen::Index r = 0; r < n; ++r) bin[order[r]] = static_cast<int>(r * k / n);
  }

  GmmModel<Scalar> model;
  model.components.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = bin[i] == c ? Scalar(1) : Scalar(0);
    const Scalar cnt = w.sum();
    auto& comp = model.components[c];
    comp.weight = Scalar(1) / Scalar(k);
    comp.mean = (points.transpose() * w) / cnt;
    comp.covariance = detail::clamp_eigenvalues<Scalar>(detail::weighted_scatter(points, w, comp.mean) / cnt, floor);
  }
  return model;
}

/// One EM iteration. The returned log-likelihood is that of the input
/// model; the returned model carries the M-step update. A component whose
/// weight falls below 1e-8 is re-seeded at the worst-explained point.
/// If `responsibilities` is non-null it receives the E-step posteriors.
template <typename Scalar>
EmStepResult<Scalar> em_step(const GmmModel<Scalar>& model, const PointMatrix<Scalar>& points, Scalar floor,
                             Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>* responsibilities = nullptr) {
  const Eigen::Index n = points.rows();
  const int k = model.k();
  if (k < 1) throw GmmError("model has no components");

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> resp = weighted_log_densities(model, points);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> point_ll(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar m = resp.row(i).maxCoeff();
    const Scalar lse = m + std::log((resp.row(i).array() - m).exp().sum());
    point_ll(i) = lse;
    resp.row(i) = (resp.row(i).array() - lse).exp().matrix();
  }
  const Scalar loglik = point_ll.sum();
  if (!std::isfinite(loglik)) throw GmmError("non-finite log-likelihood in E-step");

  EmStepResult<Scalar> out;
  out.loglik = loglik;
  out.model = model;
  out.model.loglik_trace.push_back(loglik);
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mass = resp.colwise().sum();
  const Matrix3<Scalar> floor_i = floor * Matrix3<Scalar>::Identity();
  bool reseeded = false;
  for (int c = 0; c < k; ++c) {
    auto& comp = out.model.components[c];
    const Scalar weight = mass(c) / Scalar(n);
    if (weight < Scalar(1e-8)) {
      Eigen::Index worst = 0;
      point_ll.minCoeff(&worst);
      const Vector3<Scalar> global_mean = points.colwise().mean().transpose();
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ones = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(n);
      comp.mean = points.row(worst).transpose();
      comp.covariance = detail::weighted_scatter(points, ones, global_mean) / Scalar(n * k) + floor_i;
      comp.weight = Scalar(1) / Scalar(k);
      point_ll(worst) = std::numeric_limits<Scalar>::infinity();
      ++out.model.reseeds;
      reseeded = true;
      continue;
    }
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = resp.col(c);
    comp.weight = weight;
    comp.mean = (points.transpose() * w) / mass(c);
    Matrix3<Scalar> cov = detail::weighted_scatter(points, w, comp.mean) / mass(c);
    comp.covariance = detail::clamp_eigenvalues<Scalar>(Scalar(0.5) * (cov + cov.transpose()), floor);
  }
  if (reseeded) {
    Scalar total = 0;
    for (const auto& comp : out.model.components) total += comp.weight;
    for (auto& comp : out.model.components) comp.weight /= total;
  }
  ++out.model.iterations;
  if (responsibilities) *responsibilities = std::move(resp);
  return out;
}

/// Runs EM from `init` until the relative log-likelihood change drops below
/// cfg.tol or cfg.max_iter steps have been taken.
template <typename Scalar>
GmmModel<Scalar> fit_gmm_from(GmmModel<Scalar> model, const PointMatrix<Scalar>& points, const MgrConfig& cfg) {
  cfg.validate();
  if (!points.allFinite()) throw GmmError("point set contains non-finite values");
  const Scalar floor = covariance_floor(points, cfg);
  model.iterations = 0;
  model.converged = false;
  model.loglik_trace.clear();
  Scalar previous = -std::numeric_limits<Scalar>::infinity();
  for (int it = 0; it < cfg.max_iter; ++it) {
    EmStepResult<Scalar> step = em_step(model, points, floor);
    const Scalar current = step.loglik;
    model = std::move(step.model);
    if (std::isfinite(previous) &&
        std::abs(current - previous) <= Scalar(cfg.tol) * std::max(Scalar(1), std::abs(previous))) {
      model.converged = true;
      break;
    }
    previous = current;
  }
  model.final_loglik = log_likelihood(model, points);
  return model;
}

/// Fits a cfg.k-component mixture from the temporal-segmentation start.
template <typename Scalar>
GmmModel<Scalar> fit_gmm(const PointMatrix<Scalar>& points, const MgrConfig& cfg) {
  cfg.validate();
  if (points.rows() < cfg.k) {
    throw GmmError("insufficient points: " + std::to_string(points.rows()) + " < k=" + std::to_string(cfg.k));
  }
  if (!points.allFinite()) throw GmmError("point set contains non-finite values");
  return fit_gmm_from(initialize_temporal(points, cfg.k, covariance_floor(points, cfg)), points, cfg);
}

/// Free parameters of a K-component full-covariance 3D mixture.
inline int gmm_parameter_count(int k) { return 10 * k - 1; }

template <typename Scalar>
Scalar bic(Scalar loglik, int k, Eigen::Index n) {
  return Scalar(-2) * loglik + Scalar(gmm_parameter_count(k)) * std::log(Scalar(n));
}

template <typename Scalar>
struct KSelection {
  int k = 0;
  GmmModel<Scalar> model;
  std::vector<std::pair<int, Scalar>> bic_table;  // (K, BIC) for every successful fit
};

/// Fits every K in `range` and returns the BIC minimiser (ties toward the
/// smaller K).
template <typename Scalar>
KSelection<Scalar> select_k(const PointMatrix<Scalar>& points, KRange range, MgrConfig cfg) {
  if (range.lo < 1 || range.hi < range.lo) throw GmmError("k range is empty");
  if (range.hi > points.rows()) {
    throw GmmError("k range upper bound " + std::to_string(range.hi) + " exceeds point count " +
                   std::to_string(points.rows()));
  }
  KSelection<Scalar> best;
  Scalar best_bic = std::numeric_limits<Scalar>::infinity();
  std::string last_error;
  for (int k = range.lo; k <= range.hi; ++k) {
    cfg.k = k;
    try {
      GmmModel<Scalar> model = fit_gmm(points, cfg);
      const Scalar score = bic(model.final_loglik, k, points.rows());
      best.bic_table.emplace_back(k, score);
      if (score < best_bic) {
        best_bic = score;
        best.k = k;
        best.model = std::move(model);
      }
    } catch (const GmmError& e) {
      last_error = e.what();
    }
  }
  if (best.k == 0) throw GmmError("all fits in k range failed: " + last_error);
  return best;
}

}  // namespace mgract
