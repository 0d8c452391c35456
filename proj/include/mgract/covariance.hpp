#pragma once

// Scale/rotation factorisation of 3x3 covariance matrices.
//
// A covariance is written as R * diag(s)^2 * R^T with s sorted descending,
// det(R) = +1 and R encoded as a unit quaternion (w, x, y, z) on the w >= 0
// hemisphere. The eigen-solve is a plain cyclic Jacobi sweep; for 3x3
// matrices this converges in a handful of sweeps and is accurate to the last
// few ulps on well-scaled input.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "mgract/linalg.hpp"

namespace mgract {

class DecompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct SymmetricEigen3 {
  Vector3<Scalar> values;   // descending
  Matrix3<Scalar> vectors;  // columns, det = +1
  int sweeps = 0;
};

template <typename Scalar>
Scalar off_diagonal_norm(const Matrix3<Scalar>& a) {
  return std::sqrt(Scalar(2) * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
///
/// Sweeps over the pairs (0,1), (0,2), (1,2) until the off-diagonal
/// Frobenius norm drops below `rel_tol * ||a||_F`. Eigenvalues come back
/// sorted descending; the eigenvector basis is sign-canonicalised (largest
/// magnitude component of the first two columns positive, third column
/// oriented for det = +1).
template <typename Scalar>
SymmetricEigen3<Scalar> jacobi_eigen(const Matrix3<Scalar>& input, Scalar rel_tol = Scalar(1e-12),
                                     int max_sweeps = 64) {
  Matrix3<Scalar> a = Scalar(0.5) * (input + input.transpose());
  Matrix3<Scalar> v = Matrix3<Scalar>::Identity();
  const Scalar scale = a.norm();
  const Scalar threshold = rel_tol * scale;

  int sweep = 0;
  static constexpr std::array<std::array<int, 2>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};
  while (sweep < max_sweeps && off_diagonal_norm(a) > threshold) {
    for (const auto& pq : kPairs) {
      const int p = pq[0];
      const int q = pq[1];
      const Scalar apq = a(p, q);
      if (apq == Scalar(0)) continue;
      const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
      Scalar t;
      if (std::abs(theta) > Scalar(1e150)) {
        t = Scalar(0.5) / theta;
      } else {
        t = (theta >= 0 ? Scalar(1) : Scalar(-1)) / (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
      }
      const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
      const Scalar s = t * c;
      Matrix3<Scalar> j = Matrix3<Scalar>::Identity();
      j(p, p) = c;
      j(q, q) = c;
      j(p, q) = s;
      j(q, p) = -s;
      a = (j.transpose() * a * j).eval();
      a = (Scalar(0.5) * (a + a.transpose())).eval();
      a(p, q) = Scalar(0);
      a(q, p) = Scalar(0);
      v = (v * j).eval();
    }
    ++sweep;
  }
  if (off_diagonal_norm(a) > threshold) {
    throw DecompositionError("Jacobi eigensolver did not converge");
  }

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return a(l, l) > a(r, r); });

  SymmetricEigen3<Scalar> out;
  out.sweeps = sweep;
  for (int d = 0; d < 3; ++d) {
    out.values(d) = a(order[d], order[d]);
    out.vectors.col(d) = v.col(order[d]);
  }
  for (int d = 0; d < 2; ++d) {
    Eigen::Index idx = 0;
    out.vectors.col(d).cwiseAbs().maxCoeff(&idx);
    if (out.vectors(idx, d) < Scalar(0)) out.vectors.col(d) = -out.vectors.col(d);
  }
  if (out.vectors.determinant() < Scalar(0)) out.vectors.col(2) = -out.vectors.col(2);
  return out;
}

/// Puts a quaternion (w, x, y, z) on the canonical hemisphere: w > 0, or
/// w == 0 with the first nonzero vector component positive.
template <typename Scalar>
Vector4<Scalar> canonical_hemisphere(Vector4<Scalar> q) {
  bool flip = q(0) < Scalar(0);
  if (q(0) == Scalar(0)) {
    for (int i = 1; i < 4; ++i) {
      if (q(i) != Scalar(0)) {
        flip = q(i) < Scalar(0);
        break;
      }
    }
  }
  if (flip) q = -q;
  return q;
}

/// Rotation matrix to unit quaternion (w, x, y, z), choosing the numerically
/// largest of the four candidate pivots.
template <typename Scalar>
Vector4<Scalar> quaternion_from_rotation(const Matrix3<Scalar>& r) {
  const Scalar trace = r(0, 0) + r(1, 1) + r(2, 2);
  Vector4<Scalar> q;
  if (trace > Scalar(0)) {
    const Scalar s = std::sqrt(trace + Scalar(1)) * Scalar(2);
    q << Scalar(0.25) * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + r(0, 0) - r(1, 1) - r(2, 2)) * Scalar(2);
    q << (r(2, 1) - r(1, 2)) / s, Scalar(0.25) * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    const Scalar s = std::sqrt(Scalar(1) + r(1, 1) - r(0, 0) - r(2, 2)) * Scalar(2);
    q << (r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, Scalar(0.25) * s, (r(1, 2) + r(2, 1)) / s;
  } else {
    const Scalar s = std::sqrt(Scalar(1) + r(2, 2) - r(0, 0) - r(1, 1)) * Scalar(2);
    q << (r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, Scalar(0.25) * s;
  }
  return canonical_hemisphere<Scalar>(q / q.norm());
}

template <typename Scalar>
Matrix3<Scalar> rotation_from_quaternion(const Vector4<Scalar>& q) {
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);
  Matrix3<Scalar> r;
  r << Scalar(1) - Scalar(2) * (y * y + z * z), Scalar(2) * (x * y - w * z), Scalar(2) * (x * z + w * y),
      Scalar(2) * (x * y + w * z), Scalar(1) - Scalar(2) * (x * x + z * z), Scalar(2) * (y * z - w * x),
      Scalar(2) * (x * z - w * y), Scalar(2) * (y * z + w * x), Scalar(1) - Scalar(2) * (x * x + y * y);
  return r;
}

template <typename Scalar>
struct ScaleRotation {
  Vector3<Scalar> scale;  // standard deviations along the principal axes, descending
  Vector4<Scalar> quat;   // (w, x, y, z)
};

/// Factor an SPD covariance as R diag(scale)^2 R^T.
///
/// Throws DecompositionError when the input is asymmetric beyond 1e-9
/// (relative to max(1, ||sigma||)) or has a non-positive eigenvalue; callers
/// are expected to floor covariances before getting here.
template <typename Scalar>
ScaleRotation<Scalar> decompose_covariance(const Matrix3<Scalar>& sigma) {
  if (!sigma.allFinite()) throw DecompositionError("covariance has non-finite entries");
  const Scalar asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  if (asym > Scalar(1e-9) * std::max(Scalar(1), sigma.norm())) {
    throw DecompositionError("covariance is not symmetric");
  }
  const SymmetricEigen3<Scalar> eig = jacobi_eigen<Scalar>(sigma);
  if (!(eig.values(2) > Scalar(0))) throw DecompositionError("covariance has a non-positive eigenvalue");

  ScaleRotation<Scalar> out;
  out.scale = eig.values.cwiseSqrt();
  out.quat = quaternion_from_rotation<Scalar>(eig.vectors);
  return out;
}

template <typename Scalar>
Matrix3<Scalar> reconstruct_covariance(const Vector3<Scalar>& scale, const Vector4<Scalar>& quat) {
  const Matrix3<Scalar> r = rotation_from_quaternion<Scalar>(quat);
  return r * scale.cwiseAbs2().asDiagonal() * r.transpose();
}

}  // namespace mgract
