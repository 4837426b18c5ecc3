// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rotation group primitives: exp/log maps, distances, projection onto SO(3),
// quaternion wire representation and random sampling.

#ifndef ROTAVG_SO3_HPP
#define ROTAVG_SO3_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rotavg/error.hpp"

namespace rotavg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Element of so(3): axis scaled by angle in radians.
using TangentVector = Vec3;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kRotationTolerance = 1e-12;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

/// vee of the skew-symmetric part, i.e. vee((M - M^T) / 2).
inline Vec3 vee_skew_part(const Mat3& m) {
  return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

/// 3x3 orthonormal matrix with determinant +1.
///
/// The public constructor validates the invariants (Frobenius deviation of
/// m^T m from I and |det - 1| both within kRotationTolerance) and throws
/// InvalidArgument otherwise; inputs are never silently normalized. Products
/// of rotations are trusted without re-validation.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  explicit Rotation(const Mat3& m) : m_(m) { validate(m); }

  static Rotation identity() { return Rotation(); }

  /// Throws InvalidArgument if `m` is not a rotation within `tol`.
  static void validate(const Mat3& m, double tol = kRotationTolerance) {
    if (!m.allFinite()) throw InvalidArgument("rotation has non-finite entries");
    const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
    if (ortho > tol) {
      throw InvalidArgument("matrix is not orthonormal (|M^T M - I|_F = " +
                            std::to_string(ortho) + ")");
    }
    const double det = m.determinant();
    if (std::abs(det - 1.0) > tol) {
      throw InvalidArgument("matrix determinant is " + std::to_string(det) +
                            ", expected +1");
    }
  }

  static bool is_valid(const Mat3& m, double tol = kRotationTolerance) {
    if (!m.allFinite()) return false;
    return (m.transpose() * m - Mat3::Identity()).norm() <= tol &&
           std::abs(m.determinant() - 1.0) <= tol;
  }

  const Mat3& matrix() const { return m_; }

  Rotation inverse() const { return unchecked(m_.transpose()); }
  Rotation transpose() const { return inverse(); }

  Rotation operator*(const Rotation& other) const {
    return unchecked(m_ * other.m_);
  }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  bool operator==(const Rotation& other) const { return m_ == other.m_; }

 private:
  friend Rotation exp_map(const TangentVector&);
  friend Rotation project_to_so3(const Mat3&);

  static Rotation unchecked(const Mat3& m) {
    Rotation r;
    r.m_ = m;
    return r;
  }

  Mat3 m_;
};

/// Rodrigues formula; second-order Taylor expansion below 1e-8 rad.
inline Rotation exp_map(const TangentVector& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  Mat3 m;
  if (theta < 1e-8) {
    m = Mat3::Identity() + k + 0.5 * k * k;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    m = Mat3::Identity() + a * k + b * k * k;
  }
  return Rotation::unchecked(m);
}

/// Inverse of exp_map with the canonical representative |w| in [0, pi].
inline TangentVector log_map(const Rotation& r) {
  const Mat3& m = r.matrix();
  const double tr = m.trace();
  const Vec3 v = vee_skew_part(m);  // sin(theta) * axis
  const double cos_theta = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);

  if (tr <= -1.0 + 1e-6) {
    // Near pi: sin(theta) ~ 0, so read the axis off the dominant column of
    // sym(R) - cos I = (1 - cos) a a^T.
    const Mat3 s = 0.5 * (m + m.transpose()) - cos_theta * Mat3::Identity();
    Eigen::Index k = 0;
    s.diagonal().maxCoeff(&k);
    Vec3 axis = s.col(k).normalized();
    if (axis.dot(v) < 0.0) axis = -axis;
    const double theta = std::atan2(axis.dot(v), cos_theta);
    return theta * axis;
  }

  const double sin_theta = v.norm();
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-8) return v * (1.0 + theta * theta / 6.0);
  return (theta / sin_theta) * v;
}

inline double chordal_distance(const Rotation& a, const Rotation& b) {
  return (a.matrix() - b.matrix()).norm();
}

/// Geodesic angle |log(a^T b)| in radians, in [0, pi].
inline double geodesic_angle(const Rotation& a, const Rotation& b) {
  return log_map(a.inverse() * b).norm();
}

/// Nearest orthogonal matrix (polar factor U V^T, determinant unconstrained).
inline Mat3 nearest_orthogonal(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Nearest rotation in Frobenius norm: U diag(1, 1, det(U V^T)) V^T.
/// Throws InvalidArgument when rank(m) < 2.
inline Rotation project_to_so3(const Mat3& m) {
  if (!m.allFinite()) throw InvalidArgument("project_to_so3: non-finite input");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3& sv = svd.singularValues();
  if (sv(0) == 0.0 || sv(1) <= 1e-12 * sv(0)) {
    throw InvalidArgument("project_to_so3: matrix has rank < 2");
  }
  if (sv(2) < 1e-9) {
    warn("project_to_so3: smallest singular value " + std::to_string(sv(2)) +
         " below 1e-9");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& vt = svd.matrixV().transpose();
  Vec3 d(1.0, 1.0, (u * vt).determinant() < 0.0 ? -1.0 : 1.0);
  return Rotation::unchecked(u * d.asDiagonal() * vt);
}

/// Hamilton, scalar-first unit quaternion.
struct UnitQuaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  /// Throws InvalidArgument unless |q| = 1 within 1e-12.
  static UnitQuaternion checked(double w, double x, double y, double z) {
    UnitQuaternion q{w, x, y, z};
    if (!std::isfinite(q.norm()) || std::abs(q.norm() - 1.0) > 1e-12) {
      throw InvalidArgument("quaternion is not unit norm");
    }
    return q;
  }

  /// Sign-canonical form (w >= 0); negation is exact.
  UnitQuaternion canonical() const {
    if (w < 0.0 || (w == 0.0 && std::signbit(w))) return {-w, -x, -y, -z};
    return *this;
  }

  UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }

  /// Rotation of the normalized quaternion.
  Rotation to_rotation() const {
    const double n = norm();
    const double a = w / n, b = x / n, c = y / n, d = z / n;
    Mat3 m;
    const double aa = a * a, bb = b * b, cc = c * c, dd = d * d;
    // clang-format off
    m << aa + bb - cc - dd, 2 * (b * c - a * d), 2 * (b * d + a * c),
         2 * (b * c + a * d), aa - bb + cc - dd, 2 * (c * d - a * b),
         2 * (b * d - a * c), 2 * (c * d + a * b), aa - bb - cc + dd;
    // clang-format on
    return Rotation(m);
  }

  static UnitQuaternion from_rotation(const Rotation& r) {
    const Mat3& m = r.matrix();
    const double tr = m.trace();
    UnitQuaternion q;
    if (tr > 0.0) {
      const double s = 2.0 * std::sqrt(tr + 1.0);
      q = {0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s,
           (m(1, 0) - m(0, 1)) / s};
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
      q = {(m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s,
           (m(0, 2) + m(2, 0)) / s};
    } else if (m(1, 1) > m(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
      q = {(m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s,
           (m(1, 2) + m(2, 1)) / s};
    } else {
      const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
      q = {(m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s,
           (m(1, 2) + m(2, 1)) / s, 0.25 * s};
    }
    const double n = q.norm();
    return UnitQuaternion{q.w / n, q.x / n, q.y / n, q.z / n}.canonical();
  }
};

/// Uniform (Haar) rotation via a normalized 4-d Gaussian.
template <typename Rng>
Rotation random_rotation(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double q[4];
  double n = 0.0;
  do {
    for (double& c : q) c = normal(rng);
    n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  } while (n < 1e-12);
  return UnitQuaternion{q[0] / n, q[1] / n, q[2] / n, q[3] / n}.to_rotation();
}

template <typename Rng>
Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(normal(rng), normal(rng), normal(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

/// Uniform random axis, angle uniform in [min_angle, max_angle] (radians).
template <typename Rng>
Rotation random_rotation_with_angle(Rng& rng, double min_angle,
                                    double max_angle) {
  if (!(min_angle > 0.0) || !(max_angle <= kPi) || min_angle > max_angle) {
    throw InvalidArgument("angle range must be a non-empty subset of (0, pi]");
  }
  const Vec3 axis = random_unit_vector(rng);
  std::uniform_real_distribution<double> angle(min_angle, max_angle);
  return exp_map(angle(rng) * axis);
}

}  // namespace rotavg

#endif  // ROTAVG_SO3_HPP
