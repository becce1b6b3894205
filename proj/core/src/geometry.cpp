#include "echoplane/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <cmath>

#include "echoplane/error.hpp"

namespace echoplane {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::ZeroNormal: return "ZeroNormal";
    case Errc::DegenerateEllipsoid: return "DegenerateEllipsoid";
    case Errc::ComplexRoots: return "ComplexRoots";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::SourceOutsideRoom: return "SourceOutsideRoom";
    case Errc::MicOutsideRoom: return "MicOutsideRoom";
    case Errc::InfeasibleSetup: return "InfeasibleSetup";
    case Errc::TooShort: return "TooShort";
    case Errc::NoOnsets: return "NoOnsets";
    case Errc::InsufficientChannels: return "InsufficientChannels";
    case Errc::NoValidChannels: return "NoValidChannels";
    case Errc::DegenerateArray: return "DegenerateArray";
    case Errc::AllCombinationsFailed: return "AllCombinationsFailed";
    case Errc::CoincidentPoints: return "CoincidentPoints";
    case Errc::ZeroMeanNormal: return "ZeroMeanNormal";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NoEllipsoids: return "NoEllipsoids";
    case Errc::NoTangentConsensus: return "NoTangentConsensus";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::MissingGroundTruth: return "MissingGroundTruth";
    case Errc::Io: return "Io";
    case Errc::Format: return "Format";
  }
  return "Unknown";
}

Plane::Plane(const Vec3& normal, double d) : normal_(normal), d_(d) {
  if (!normal.allFinite() || !std::isfinite(d)) {
    throw Error(Errc::InvalidArgument, "plane coefficients must be finite");
  }
  if (std::abs(normal.norm() - 1.0) > 1e-9) {
    throw Error(Errc::InvalidArgument, "plane normal must have unit norm");
  }
}

Plane Plane::from_normal_and_point(const Vec3& normal, const Point3& point) {
  const double n = normal.norm();
  if (!(n >= 1e-12)) {
    throw Error(Errc::ZeroNormal, "normal vector norm below 1e-12");
  }
  const Vec3 v = normal / n;
  return Plane(v, -point.dot(v));
}

Point3 reflect_point(const Point3& p, const Plane& plane) noexcept {
  return p - 2.0 * plane.signed_distance(p) * plane.normal();
}

Point3 project_point_onto_plane(const Point3& p, const Plane& plane) noexcept {
  return p - plane.signed_distance(p) * plane.normal();
}

bool Ellipsoid::is_valid_quadric() const {
  const double det = E_.determinant();
  const double trace3 = E_(0, 0) + E_(1, 1) + E_(2, 2);
  const double minor3 = E_.topLeftCorner<3, 3>().determinant();
  return det != 0.0 && det / trace3 < 0.0 && minor3 > 0.0;
}

Ellipsoid ellipsoid_from_focus_pair(const Point3& mic, const Point3& src, double path_length,
                                    std::optional<double> focal_distance) {
  const Vec3 axis = src - mic;
  const double geometric = axis.norm();
  const double focal = focal_distance.value_or(geometric);
  if (!std::isfinite(path_length) || !(path_length > focal + 1e-9) || !(path_length > geometric)) {
    throw Error(Errc::DegenerateEllipsoid, "path length must exceed the focal distance");
  }

  Ellipsoid ell;
  ell.focus_a_ = mic;
  ell.focus_b_ = src;
  ell.path_length_ = path_length;
  ell.semi_major_ = 0.5 * path_length;
  ell.semi_minor_ = 0.5 * std::sqrt(path_length * path_length - focal * focal);

  // Unit sphere -> scaled -> rotated so that local x follows the focal axis -> translated.
  Mat4 S = Mat4::Identity();
  S(0, 0) = ell.semi_major_;
  S(1, 1) = ell.semi_minor_;
  S(2, 2) = ell.semi_minor_;

  Mat4 R = Mat4::Identity();
  if (geometric > 0.0) {
    R.topLeftCorner<3, 3>() =
        Eigen::Quaterniond::FromTwoVectors(Vec3::UnitX(), axis / geometric).toRotationMatrix();
  }

  Mat4 T = Mat4::Identity();
  T.topRightCorner<3, 1>() = 0.5 * (mic + src);

  const Mat4 unit_sphere = Vec4(1.0, 1.0, 1.0, -1.0).asDiagonal();
  const Mat4 M_inv = (T * R * S).inverse();
  ell.E_ = M_inv.transpose() * unit_sphere * M_inv;
  ell.E_ = 0.5 * (ell.E_ + ell.E_.transpose()).eval();
  return ell;
}

namespace {

double minor_det(const Mat4& E, int skip_row, int skip_col) {
  Mat3 m;
  for (int r = 0, rr = 0; r < 4; ++r) {
    if (r == skip_row) continue;
    for (int c = 0, cc = 0; c < 4; ++c) {
      if (c == skip_col) continue;
      m(rr, cc++) = E(r, c);
    }
    ++rr;
  }
  return m.determinant();
}

}  // namespace

Mat4 adjoint(const Mat4& E) {
  Mat4 adj;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double sign = ((r + c) % 2 == 0) ? 1.0 : -1.0;
      adj(c, r) = sign * minor_det(E, r, c);
    }
  }
  return adj;
}

Mat4 normalized_dual(const Ellipsoid& ell) {
  const double det = ell.matrix().determinant();
  return adjoint(ell.matrix()) / std::pow(std::abs(det), 0.75);
}

double tangency_coefficient(const Plane& plane, const Mat4& dual) {
  const Vec4 p = plane.coeffs();
  return std::abs(p.dot(dual * p));
}

double tangency_coefficient(const Plane& plane, const Ellipsoid& ell) {
  return tangency_coefficient(plane, normalized_dual(ell));
}

TangentOffsets tangent_plane_offset(const Vec3& v, const Mat4& A) {
  const double w1 = A(3, 3);
  const double w2 = 2.0 * (A(0, 3) * v.x() + A(1, 3) * v.y() + A(2, 3) * v.z());
  const double w3 = v.dot(A.topLeftCorner<3, 3>() * v);
  double disc = w2 * w2 - 4.0 * w1 * w3;
  const double scale = w2 * w2 + std::abs(4.0 * w1 * w3);
  if (disc < 0.0) {
    if (disc < -1e-12 * scale) {
      throw Error(Errc::ComplexRoots, "no real tangent plane for this direction");
    }
    disc = 0.0;
  }
  if (w1 == 0.0) {
    throw Error(Errc::ComplexRoots, "degenerate dual quadric");
  }
  const double s = std::sqrt(disc);
  // Cancellation-free pair of roots; r_plus is (-w2 + s) / (2 w1).
  const double q = -0.5 * (w2 + std::copysign(s, w2));
  if (q == 0.0) return {0.0, 0.0};
  const double r_a = q / w1;
  const double r_b = w3 / q;
  return std::signbit(w2) ? TangentOffsets{r_a, r_b} : TangentOffsets{r_b, r_a};
}

TangentOffsets tangent_plane_offset(const Vec3& unit_normal, const Ellipsoid& ell) {
  return tangent_plane_offset(unit_normal, adjoint(ell.matrix()));
}

}  // namespace echoplane
