#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mgract/gmm.hpp"
#include "oracles.hpp"

using namespace mgract;

namespace {

Points3d cluster(int n, const Vector3d& mu, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Points3d x(n, 3);
  for (int i = 0; i < n; ++i) x.row(i) = (mu + Vector3d(g(rng), g(rng), g(rng))).transpose();
  return x;
}

}  // namespace

TEST_CASE("K=1 converges to the sample moments") {
  const Points3d x = cluster(80, Vector3d(0.3, 0.4, 0.5), 0.05, 1);
  MgrConfig cfg;
  cfg.k = 1;
  const auto model = fit_gmm(x, cfg);
  const Vector3d mean = x.colwise().mean().transpose();
  const Points3d centred = x.rowwise() - mean.transpose();
  const Matrix3d cov = centred.transpose() * centred / double(x.rows());
  CHECK(cov.eigenvalues().real().minCoeff() > covariance_floor(x, cfg));
  CHECK((model.components[0].mean - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((model.components[0].covariance - cov).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(model.components[0].weight == doctest::Approx(1.0));
}

TEST_CASE("K=2 on two distinct points is an exact degenerate fit") {
  Points3d x(2, 3);
  x << 0, 0, 0, 1, 1, 1;
  MgrConfig cfg;
  cfg.k = 2;
  cfg.eps_floor = 1e-4;
  const auto model = fit_gmm(x, cfg);
  for (int c = 0; c < 2; ++c) {
    CHECK(model.components[c].weight == doctest::Approx(0.5));
    CHECK((model.components[c].covariance - 1e-4 * Matrix3d::Identity()).norm() < 1e-12);
  }
  CHECK((model.components[0].mean - x.row(0).transpose()).norm() < 1e-12);
  CHECK((model.components[1].mean - x.row(1).transpose()).norm() < 1e-12);
}

TEST_CASE("E-step log-likelihood matches the brute-force density sum") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mix = oracle::well_separated(seed);
    GmmModel<double> truth;
    for (const auto& mu : mix.means) truth.components.push_back({1.0 / 3, mu, 0.01 * Matrix3d::Identity()});
    const auto step = em_step(truth, mix.points, 0.0);
    const double ref = oracle::brute_force_loglik(truth, mix.points);
    CHECK(std::abs(step.loglik - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    CHECK(log_likelihood(truth, mix.points) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("uniform start with K=1: one M-step gives sample moments") {
  const Points3d x = cluster(40, Vector3d(1, 2, 3), 0.3, 4);
  GmmModel<double> m;
  m.components.push_back({1.0, Vector3d::Zero(), Matrix3d::Identity()});
  const auto step = em_step(m, x, 0.0);
  CHECK((step.model.components[0].mean - x.colwise().mean().transpose()).norm() < 1e-12);
}

TEST_CASE("EM log-likelihood never decreases") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mix = oracle::well_separated(100 + seed);
    MgrConfig cfg;
    cfg.k = 4;
    cfg.tol = 1e-15;
    cfg.max_iter = 60;
    const auto model = fit_gmm(mix.points, cfg);
    for (std::size_t i = 1; i < model.loglik_trace.size(); ++i) {
      CHECK(model.loglik_trace[i] >= model.loglik_trace[i - 1] - 1e-8);
    }
  }
}

// The temporal-bin start assumes the third axis is time, so on arbitrary 3D
// mixtures it can stop in a local optimum. Restarts pick the best likelihood.
TEST_CASE("well-separated mixtures recover their means") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto mix = oracle::well_separated(seed);
    MgrConfig cfg;
    cfg.k = 3;
    const auto model = oracle::best_fit(mix.points, cfg);
    CHECK(oracle::matched_mean_error(model, mix.means) <= 0.05);
  }
}

TEST_CASE("BIC picks the generating component count") {
  MgrConfig cfg;
  const Points3d one = cluster(200, Vector3d(0, 0, 0), 0.1, 21);
  CHECK(select_k(one, KRange{1, 4}, cfg).k == 1);
  Points3d three(300, 3);
  three << cluster(100, Vector3d(0.0, 0.0, 0.2), 0.03, 31), cluster(100, Vector3d(0.3, 0.1, 0.5), 0.03, 32),
      cluster(100, Vector3d(-0.2, 0.3, 0.8), 0.03, 33);
  const auto sel = select_k(three, KRange{1, 6}, cfg);
  CHECK(sel.k == 3);
  REQUIRE(sel.bic_table.size() == 6u);
  for (const auto& [k, score] : sel.bic_table) CHECK(score >= sel.bic_table[2].second);
}

TEST_CASE("preconditions") {
  MgrConfig cfg;
  const Points3d four = cluster(4, Vector3d::Zero(), 1.0, 2);
  CHECK_THROWS_AS(select_k(four, KRange{5, 5}, cfg), GmmError);
  cfg.k = 5;
  CHECK_THROWS_AS(fit_gmm(four, cfg), GmmError);
  Points3d bad = four;
  bad(1, 1) = std::nan("");
  cfg.k = 2;
  CHECK_THROWS_AS(fit_gmm(bad, cfg), GmmError);
  cfg.k = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("float and double fits agree on well-conditioned data") {
  const auto mix = oracle::well_separated(8);
  MgrConfig cfg;
  cfg.k = 3;
  const auto d = fit_gmm(mix.points, cfg);
  const auto f = fit_gmm<float>(mix.points.cast<float>(), cfg);
  CHECK(oracle::matched_mean_error(d, {f.components[0].mean.cast<double>(), f.components[1].mean.cast<double>(),
                                       f.components[2].mean.cast<double>()}) < 1e-3);
}

TEST_CASE("floored covariances keep every eigenvalue at or above the floor") {
  Points3d line(30, 3);
  for (int i = 0; i < 30; ++i) line.row(i) << i * 0.1, 0.0, i / 29.0;  // rank-deficient
  MgrConfig cfg;
  cfg.k = 2;
  cfg.eps_floor = 1e-3;
  const auto model = fit_gmm(line, cfg);
  for (const auto& c : model.components) {
    const auto eig = jacobi_eigen<double>(c.covariance);
    CHECK(eig.values(2) >= 1e-3 * (1 - 1e-12));
  }
  const Matrix3d clamped = detail::clamp_eigenvalues<double>(Vector3d(4, 1e-6, 0).asDiagonal(), 1e-2);
  CHECK((clamped - Matrix3d(Vector3d(4, 1e-2, 1e-2).asDiagonal())).norm() < 1e-12);
}
