#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <random>

#include "echoplane/error.hpp"
#include "echoplane/geometry.hpp"

using namespace echoplane;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

Point3 random_point(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

// Point on the spheroid surface at polar angle theta from the focal axis.
Point3 spheroid_point(const Ellipsoid& e, double theta, double phi) {
  const Vec3 axis = (e.focus_b() - e.focus_a()).normalized();
  const Vec3 p = axis.unitOrthogonal();
  const Vec3 q = axis.cross(p);
  return e.center() + e.semi_major() * std::cos(theta) * axis +
         e.semi_minor() * std::sin(theta) * (std::cos(phi) * p + std::sin(phi) * q);
}

}  // namespace

TEST(Plane, RejectsNonUnitNormal) {
  EXPECT_THROW(Plane(Vec3(1, 1, 0), 0.0), Error);
  EXPECT_THROW(Plane(Vec3(0, 0, 1), std::nan("")), Error);
  EXPECT_NO_THROW(Plane(Vec3(0, 0, 1), -2.0));
}

TEST(Plane, FromNormalAndPoint) {
  const Plane p = Plane::from_normal_and_point(Vec3(0, 0, 3), Point3(1, 2, 0.5));
  EXPECT_NEAR(p.normal().z(), 1.0, 1e-15);
  EXPECT_NEAR(p.offset(), -0.5, 1e-15);
  EXPECT_NEAR(p.signed_distance(Point3(4, 4, 1.5)), 1.0, 1e-15);
  try {
    Plane::from_normal_and_point(Vec3::Zero(), Point3::Zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroNormal);
  }
}

TEST(Plane, ReflectAndProject) {
  const Plane floor(Vec3::UnitZ(), 0.0);
  EXPECT_TRUE(reflect_point(Point3(1, 2, 3), floor).isApprox(Point3(1, 2, -3)));
  EXPECT_TRUE(project_point_onto_plane(Point3(1, 2, 3), floor).isApprox(Point3(1, 2, 0)));
}

TEST(PlaneProperty, ReflectionIsAnInvolutionAndProjectionLandsOnPlane) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const Plane pl(random_unit(rng), std::uniform_real_distribution<double>(-3, 3)(rng));
    const Point3 x = random_point(rng, 5.0);
    EXPECT_LT((reflect_point(reflect_point(x, pl), pl) - x).norm(), 1e-12);
    EXPECT_LT(std::abs(pl.signed_distance(project_point_onto_plane(x, pl))), 1e-12);
    EXPECT_NEAR(pl.signed_distance(reflect_point(x, pl)), -pl.signed_distance(x), 1e-12);
  }
}

TEST(Ellipsoid, AxesFromFoci) {
  const Ellipsoid e = ellipsoid_from_focus_pair(Point3(-1, 0, 0), Point3(1, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(e.semi_major(), 2.0);
  EXPECT_NEAR(e.semi_minor(), std::sqrt(3.0), 1e-15);
  EXPECT_TRUE(e.is_valid_quadric());
  // vertex on the focal axis and co-vertex on the minor axis
  const Vec4 v(2, 0, 0, 1), w(0, 0, std::sqrt(3.0), 1);
  EXPECT_NEAR(v.dot(e.matrix() * v), 0.0, 1e-12);
  EXPECT_NEAR(w.dot(e.matrix() * w), 0.0, 1e-12);
}

TEST(Ellipsoid, DegenerateWhenPathNotLongerThanFocalDistance) {
  try {
    ellipsoid_from_focus_pair(Point3(0, 0, 0), Point3(1, 0, 0), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DegenerateEllipsoid);
  }
  EXPECT_THROW(ellipsoid_from_focus_pair(Point3(0, 0, 0), Point3(1, 0, 0), 2.0, 2.5), Error);
}

TEST(Ellipsoid, MeasuredFocalDistanceOverridesGeometry) {
  const Ellipsoid e = ellipsoid_from_focus_pair(Point3(0, 0, 0), Point3(1, 0, 0), 3.0, 1.2);
  EXPECT_NEAR(e.semi_minor(), 0.5 * std::sqrt(9.0 - 1.44), 1e-15);
}

TEST(EllipsoidProperty, SurfacePointsHaveFocalSumEqualToPath) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(0.0, 2 * M_PI);
  for (int t = 0; t < 100; ++t) {
    const Point3 a = random_point(rng, 3.0), b = random_point(rng, 3.0);
    const double L = (a - b).norm() + std::uniform_real_distribution<double>(0.05, 4.0)(rng);
    const Ellipsoid e = ellipsoid_from_focus_pair(a, b, L);
    ASSERT_TRUE(e.is_valid_quadric());
    const Point3 x = spheroid_point(e, ang(rng), ang(rng));
    EXPECT_NEAR((x - a).norm() + (x - b).norm(), L, 1e-9);
    Vec4 h;
    h << x, 1.0;
    EXPECT_NEAR(h.dot(e.matrix() * h) / e.matrix().norm(), 0.0, 1e-9);
  }
}

TEST(Adjoint, KnownDiagonal) {
  const Mat4 d = Vec4(1, 2, 3, 4).asDiagonal();
  const Mat4 expected = Vec4(24, 12, 8, 6).asDiagonal();
  EXPECT_TRUE(adjoint(d).isApprox(expected));
}

TEST(AdjointProperty, ProductIsDeterminantTimesIdentity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 100; ++t) {
    Mat4 E;
    for (int i = 0; i < 16; ++i) E(i / 4, i % 4) = u(rng);
    const Mat4 lhs = E * adjoint(E);
    const Mat4 rhs = E.determinant() * Mat4::Identity();
    EXPECT_LT((lhs - rhs).norm(), 1e-10 * std::max(1.0, E.norm() * E.norm() * E.norm() * E.norm()));
  }
  // singular matrices still satisfy it
  Mat4 s = Mat4::Ones();
  EXPECT_LT((s * adjoint(s)).norm(), 1e-12);
}

TEST(TangentPlane, OffsetsMatchSupportFunction) {
  // Spheroid with foci on the x axis: support h(v) = sqrt(a^2 vx^2 + b^2 (vy^2 + vz^2)).
  const Ellipsoid e = ellipsoid_from_focus_pair(Point3(-1, 0, 0), Point3(1, 0, 0), 5.0);
  const double a = 2.5, b = std::sqrt(2.5 * 2.5 - 1.0);
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const Vec3 v = random_unit(rng);
    const double h = std::sqrt(a * a * v.x() * v.x() + b * b * (v.y() * v.y() + v.z() * v.z()));
    const TangentOffsets off = tangent_plane_offset(v, e);
    const double lo = std::min(off.d_plus, off.d_minus), hi = std::max(off.d_plus, off.d_minus);
    EXPECT_NEAR(lo, -h, 1e-9);
    EXPECT_NEAR(hi, h, 1e-9);
    EXPECT_NEAR(tangency_coefficient(Plane(v, off.d_plus), e), 0.0, 1e-9);
    EXPECT_NEAR(tangency_coefficient(Plane(v, off.d_minus), e), 0.0, 1e-9);
  }
}

TEST(TangentPlane, ShiftedPlaneIsNotTangent) {
  const Ellipsoid e = ellipsoid_from_focus_pair(Point3(0, 0, 1), Point3(1, 0, 1), 2.0);
  const TangentOffsets off = tangent_plane_offset(Vec3::UnitZ(), e);
  EXPECT_GT(tangency_coefficient(Plane(Vec3::UnitZ(), off.d_plus + 0.05), e), 1e-3);
}

TEST(TangencyProperty, AgreesWithBruteForceNearestDistance) {
  // Tangent planes touch the surface (nearest distance 0); shifted planes do not.
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ang(0.0, 2 * M_PI);
  for (int t = 0; t < 100; ++t) {
    const Point3 a = random_point(rng, 2.0), b = random_point(rng, 2.0);
    const Ellipsoid e = ellipsoid_from_focus_pair(a, b, (a - b).norm() + 0.5 + t * 0.02);
    const Vec3 v = random_unit(rng);
    const TangentOffsets off = tangent_plane_offset(v, e);
    const double shift = (t % 2 == 0) ? 0.0 : 0.1;
    const Plane pl(v, off.d_plus + shift);
    double nearest = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 400; ++i) {
      for (int k = 0; k < 400; ++k) {
        const Point3 x = spheroid_point(e, M_PI * i / 400.0, 2 * M_PI * k / 400.0);
        nearest = std::min(nearest, std::abs(pl.signed_distance(x)));
      }
    }
    const bool tangent = tangency_coefficient(pl, e) < 1e-9;
    EXPECT_EQ(tangent, shift == 0.0);
    if (tangent) {
      EXPECT_LT(nearest, 1e-3);  // grid resolution bound
    } else {
      EXPECT_GT(nearest, 0.05);
    }
  }
}
