#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

namespace msym {

/// Largest coordinate dimension any chart, fiber or jet block may have.
inline constexpr int kMaxDim = 3;

/// Small dynamic vectors/matrices with inline storage; jets never exceed 3x4.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

/// Inverse of a square block of size up to 3 through Eigen's closed forms.
inline Mat small_inverse(const Mat& m) {
  switch (m.rows()) {
    case 1: return Mat::Constant(1, 1, 1.0 / m(0, 0));
    case 2: return Mat(Eigen::Matrix2d(m).inverse());
    case 3: return Mat(Eigen::Matrix3d(m).inverse());
    default: return m.inverse();
  }
}

}  // namespace msym
