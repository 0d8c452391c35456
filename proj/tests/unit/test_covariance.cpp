#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "mgract/covariance.hpp"

using namespace mgract;

namespace {

Matrix3d random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix3d a;
  for (int i = 0; i < 9; ++i) a(i) = g(rng);
  return a * a.transpose() + 1e-3 * Matrix3d::Identity();
}

}  // namespace

TEST_CASE("decompose: identity") {
  const auto d = decompose_covariance<double>(Matrix3d::Identity());
  CHECK((d.scale - Vector3d::Ones()).norm() < 1e-15);
  CHECK((d.quat - Vector4d(1, 0, 0, 0)).norm() < 1e-15);
}

TEST_CASE("decompose: diagonal matrix keeps axis order") {
  const auto d = decompose_covariance<double>(Vector3d(4, 1, 0.25).asDiagonal());
  CHECK((d.scale - Vector3d(2, 1, 0.5)).norm() < 1e-14);
  CHECK((d.quat - Vector4d(1, 0, 0, 0)).norm() < 1e-14);
}

TEST_CASE("decompose: random SPD round trip and unit quaternions") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Matrix3d sigma = random_spd(rng);
    const auto d = decompose_covariance(sigma);
    CHECK((reconstruct_covariance(d.scale, d.quat) - sigma).norm() / sigma.norm() < 1e-9);
    CHECK(std::abs(d.quat.norm() - 1.0) < 1e-12);
    CHECK(d.quat(0) >= 0.0);
    CHECK(d.scale(0) >= d.scale(1));
    CHECK(d.scale(1) >= d.scale(2));
  }
}

TEST_CASE("quaternion conversions agree with Eigen") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Quaterniond ref = Eigen::Quaterniond::UnitRandom();
    const Vector4d q = quaternion_from_rotation<double>(ref.toRotationMatrix());
    Vector4d expect(ref.w(), ref.x(), ref.y(), ref.z());
    if (expect(0) < 0) expect = -expect;
    CHECK((q - expect).norm() < 1e-12);
    CHECK((rotation_from_quaternion(q) - ref.toRotationMatrix()).norm() < 1e-12);
  }
  (void)rng;
}

TEST_CASE("jacobi: matches Eigen's self-adjoint solver") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Matrix3d a = random_spd(rng);
    const auto mine = jacobi_eigen(a);
    Eigen::SelfAdjointEigenSolver<Matrix3d> ref(a);
    const Vector3d ref_desc = ref.eigenvalues().reverse();
    CHECK((mine.values - ref_desc).norm() / ref_desc.norm() < 1e-12);
    CHECK(mine.vectors.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("canonical hemisphere: w = 0 ties use the first nonzero vector part") {
  CHECK(canonical_hemisphere<double>(Vector4d(-0.5, 0.5, 0.5, 0.5)) == Vector4d(0.5, -0.5, -0.5, -0.5));
  CHECK(canonical_hemisphere<double>(Vector4d(0, 0, -1, 0)) == Vector4d(0, 0, 1, 0));
}

TEST_CASE("decompose: rejects asymmetric and indefinite input") {
  Matrix3d bad = Matrix3d::Identity();
  bad(0, 1) = 0.5;
  CHECK_THROWS_AS(decompose_covariance(bad), DecompositionError);
  CHECK_THROWS_AS(decompose_covariance<double>(Vector3d(1, 1, -1).asDiagonal()), DecompositionError);
}
