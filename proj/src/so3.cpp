#include "gmpc/so3.hpp"

#include <algorithm>
#include <cmath>

namespace gmpc::so3 {

namespace {

// Past this cosine the axis is read from the symmetric part of R.
constexpr double kNearPiCosine = -0.99;
// Below this sin(θ) the skew part carries no usable sign information.
constexpr double kBranchSine = 1e-10;

}  // namespace

RotationMatrix::RotationMatrix(const Matrix3& m) : m_(m) {
  if (!m.allFinite()) {
    throw NotRotation("rotation matrix has non-finite entries");
  }
  const double orth = (m.transpose() * m - Matrix3::Identity()).norm();
  const double det = m.determinant();
  if (orth > kRotationTolerance || std::abs(det - 1.0) > kRotationTolerance) {
    throw NotRotation("matrix is not in SO(3): |RtR - I| = " + std::to_string(orth) +
                      ", det = " + std::to_string(det));
  }
}

double RotationMatrix::orthogonality_error() const {
  return (m_.transpose() * m_ - Matrix3::Identity()).norm();
}

Matrix3 hat(const Vector3& v) {
  Matrix3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Vector3 vee(const Matrix3& s) {
  if ((s + s.transpose()).norm() > kSkewTolerance) {
    throw NotSkew("matrix is not skew-symmetric");
  }
  return {s(2, 1), s(0, 2), s(1, 0)};
}

RotationMatrix exp(const Vector3& v) {
  const double theta = v.norm();
  const Matrix3 w = hat(v);
  if (theta < kSmallAngle) {
    return RotationMatrix(Matrix3::Identity() + w + 0.5 * w * w, RotationMatrix::Trusted{});
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return RotationMatrix(Matrix3::Identity() + a * w + b * w * w, RotationMatrix::Trusted{});
}

double angle(const RotationMatrix& r) {
  const Matrix3& m = r.matrix();
  const Vector3 skew{m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
  const double s = 0.5 * skew.norm();
  const double c = 0.5 * (m.trace() - 1.0);
  return std::atan2(s, c);
}

Vector3 log(const RotationMatrix& r, BranchConvention convention) {
  const Matrix3& m = r.matrix();
  // sin(θ)·axis
  const Vector3 sin_axis = 0.5 * Vector3{m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
  const double s = sin_axis.norm();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(s, c);

  if (theta < kSmallAngle) {
    return (1.0 + theta * theta / 6.0) * sin_axis;
  }
  if (c > kNearPiCosine) {
    return (theta / s) * sin_axis;
  }

  // Near π: (R + Rᵀ)/2 = cos(θ) I + (1 - cos(θ)) a aᵀ.
  const Matrix3 outer = (0.5 * (m + m.transpose()) - c * Matrix3::Identity()) / (1.0 - c);
  Eigen::Index i = 0;
  outer.diagonal().maxCoeff(&i);
  Vector3 axis = outer.col(i) / std::sqrt(std::max(outer(i, i), 0.0));
  axis.normalize();

  if (s > kBranchSine) {
    if (axis.dot(sin_axis) < 0.0) {
      axis = -axis;
    }
  } else {
    Eigen::Index j = 0;
    axis.cwiseAbs().maxCoeff(&j);
    const bool negative = axis(j) < 0.0;
    const bool want_negative = convention == BranchConvention::kNonPositive;
    if (negative != want_negative) {
      axis = -axis;
    }
  }
  return theta * axis;
}

double geodesic_distance(const RotationMatrix& r1, const RotationMatrix& r2) {
  return angle(r1.transpose() * r2);
}

RotationMatrix project(const Matrix3& a) {
  if (!a.allFinite() || a.determinant() <= 0.0) {
    throw Degenerate("cannot project a matrix with non-positive determinant onto SO(3)");
  }
  Eigen::JacobiSVD<Matrix3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3 sigma = svd.singularValues();
  if (sigma(2) <= 1e-12 * sigma(0)) {
    throw Degenerate("matrix is numerically rank-deficient");
  }
  return RotationMatrix(svd.matrixU() * svd.matrixV().transpose(), RotationMatrix::Trusted{});
}

RotationMatrix rot_z(double angle) { return exp(Vector3{0.0, 0.0, angle}); }

}  // namespace gmpc::so3
