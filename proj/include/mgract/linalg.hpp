#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mgract {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

// One row per point, columns (spatial a, spatial b, scaled time).
template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

using Vector2d = Eigen::Vector2d;
using Vector3d = Vector3<double>;
using Vector4d = Vector4<double>;
using Matrix3d = Matrix3<double>;
using Points3d = PointMatrix<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

}  // namespace mgract
