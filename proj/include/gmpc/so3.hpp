// Rotation group SO(3) and its Lie algebra so(3).
//
// Axis-angle vectors v ∈ R³ encode the rotation exp(hat(v)); the canonical
// branch keeps ‖v‖ ≤ π.  On the branch cut (rotations by exactly π, where
// tr(R) = -1) the sign of the axis is not determined by R, and log() resolves
// it with an explicit BranchConvention.

#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gmpc::so3 {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline constexpr double kRotationTolerance = 1e-9;
inline constexpr double kSkewTolerance = 1e-12;
inline constexpr double kSmallAngle = 1e-8;

class So3Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotRotation : public So3Error {
 public:
  using So3Error::So3Error;
};

class NotSkew : public So3Error {
 public:
  using So3Error::So3Error;
};

class Degenerate : public So3Error {
 public:
  using So3Error::So3Error;
};

/// Sign rule for the axis of a π rotation: the largest-magnitude axis
/// component is made nonnegative (default) or nonpositive (swapped).
enum class BranchConvention { kNonNegative, kNonPositive };

/// A 3×3 orthogonal matrix with unit determinant.
///
/// Construction from a raw matrix validates ‖RᵀR − I‖_F ≤ 1e-9 and
/// |det R − 1| ≤ 1e-9.  Composition does not re-validate: the group is
/// closed under multiplication and drift is bounded by round-off.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Matrix3::Identity()) {}
  explicit RotationMatrix(const Matrix3& m);

  static RotationMatrix identity() { return {}; }

  const Matrix3& matrix() const { return m_; }
  double operator()(int row, int col) const { return m_(row, col); }

  RotationMatrix operator*(const RotationMatrix& other) const {
    return RotationMatrix(m_ * other.m_, Trusted{});
  }
  Vector3 operator*(const Vector3& v) const { return m_ * v; }

  RotationMatrix transpose() const { return RotationMatrix(m_.transpose(), Trusted{}); }

  /// ‖RᵀR − I‖_F
  double orthogonality_error() const;

  bool operator==(const RotationMatrix& other) const { return m_ == other.m_; }

 private:
  struct Trusted {};
  RotationMatrix(const Matrix3& m, Trusted) : m_(m) {}

  // exp/project build rotations that are orthogonal by construction.
  friend RotationMatrix exp(const Vector3& v);
  friend RotationMatrix project(const Matrix3& a);

  Matrix3 m_;
};

/// Cross-product matrix: hat(v) * b == v.cross(b).
Matrix3 hat(const Vector3& v);

/// Inverse of hat.  Throws NotSkew if ‖S + Sᵀ‖_F > 1e-12.
Vector3 vee(const Matrix3& s);

/// Rodrigues formula, Taylor series below ‖v‖ = 1e-8.
RotationMatrix exp(const Vector3& v);

/// Principal logarithm; the result has norm ≤ π.
Vector3 log(const RotationMatrix& r,
            BranchConvention convention = BranchConvention::kNonNegative);

/// Rotation angle of r, in [0, π].
double angle(const RotationMatrix& r);

/// ‖log(r1ᵀ r2)‖, the bi-invariant angular distance.
double geodesic_distance(const RotationMatrix& r1, const RotationMatrix& r2);

/// Nearest rotation in Frobenius norm (polar factor).  Throws Degenerate if
/// det(a) ≤ 0 or a is numerically rank-deficient.
RotationMatrix project(const Matrix3& a);

/// Rotation by `angle` radians about the z axis.
RotationMatrix rot_z(double angle);

}  // namespace gmpc::so3
