#pragma once

// Homogeneous-coordinate primitives shared by every locator: points, planes,
// and ellipsoids built from a focus pair.

#include <Eigen/Core>
#include <optional>
#include <utility>

namespace echoplane {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Plane n.x + d = 0 with unit normal n. Stored as the homogeneous 4-vector [n; d].
class Plane {
 public:
  /// Throws InvalidArgument unless |normal| = 1 within 1e-9 and all values are finite.
  Plane(const Vec3& normal, double d);

  /// Normalizes `normal`; throws ZeroNormal if its norm is below 1e-12.
  static Plane from_normal_and_point(const Vec3& normal, const Point3& point);

  const Vec3& normal() const noexcept { return normal_; }
  double offset() const noexcept { return d_; }
  Vec4 coeffs() const noexcept { return {normal_.x(), normal_.y(), normal_.z(), d_}; }

  double signed_distance(const Point3& p) const noexcept { return normal_.dot(p) + d_; }

  /// Same plane with the normal pointing the other way.
  Plane flipped() const { return Plane(-normal_, -d_); }

 private:
  Vec3 normal_;
  double d_;
};

Point3 reflect_point(const Point3& p, const Plane& plane) noexcept;
Point3 project_point_onto_plane(const Point3& p, const Plane& plane) noexcept;

/// Prolate spheroid whose foci sit on a microphone and a loudspeaker and whose
/// focal-distance sum equals a reflection path length.
class Ellipsoid {
 public:
  const Mat4& matrix() const noexcept { return E_; }
  const Point3& focus_a() const noexcept { return focus_a_; }
  const Point3& focus_b() const noexcept { return focus_b_; }
  double path_length() const noexcept { return path_length_; }
  double semi_major() const noexcept { return semi_major_; }
  double semi_minor() const noexcept { return semi_minor_; }
  Point3 center() const { return 0.5 * (focus_a_ + focus_b_); }

  /// det(E) != 0, det(E)/(a+b+c) < 0 and a positive upper-left 3x3 minor.
  bool is_valid_quadric() const;

  friend Ellipsoid ellipsoid_from_focus_pair(const Point3&, const Point3&, double,
                                             std::optional<double>);

 private:
  Ellipsoid() = default;
  Mat4 E_ = Mat4::Zero();
  Point3 focus_a_ = Point3::Zero();
  Point3 focus_b_ = Point3::Zero();
  double path_length_ = 0.0;
  double semi_major_ = 0.0;
  double semi_minor_ = 0.0;
};

/// Builds E = T^-T R^-T S^-T E_I S^-1 R^-1 T^-1 around the focus midpoint.
///
/// Semi-major axis is pathLength/2 along the focal axis. The semi-minor axis is
/// sqrt(pathLength^2 - focalDistance^2)/2, where focalDistance defaults to
/// |src - mic| and may be overridden with a measured direct-path length.
/// Throws DegenerateEllipsoid when pathLength does not exceed the focal distance.
Ellipsoid ellipsoid_from_focus_pair(const Point3& mic, const Point3& src, double path_length,
                                    std::optional<double> focal_distance = std::nullopt);

/// Classical adjugate (transposed cofactor matrix): E * adj(E) = det(E) * I.
Mat4 adjoint(const Mat4& E);

/// adj(E) scaled by |det E|^(-3/4), which makes p^T E* p independent of the
/// arbitrary overall scale of E.
Mat4 normalized_dual(const Ellipsoid& ell);

/// |p^T E* p| with the normalized dual quadric; zero iff the plane is tangent.
double tangency_coefficient(const Plane& plane, const Ellipsoid& ell);
double tangency_coefficient(const Plane& plane, const Mat4& normalized_dual);

struct TangentOffsets {
  double d_plus;
  double d_minus;
};

/// Both offsets d for which [v; d] is tangent to the quadric. Throws ComplexRoots
/// when the discriminant is negative.
TangentOffsets tangent_plane_offset(const Vec3& unit_normal, const Ellipsoid& ell);
TangentOffsets tangent_plane_offset(const Vec3& unit_normal, const Mat4& dual);

}  // namespace echoplane
