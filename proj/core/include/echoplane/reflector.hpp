#pragma once

// Reflector-plane estimators: loudspeaker-image bisection (LIB) and its
// multi-loudspeaker mean/median variants, ellipsoid tangent sample consensus
// (ETSAC) and images mirrored from an estimated plane.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echoplane/beamform.hpp"
#include "echoplane/imgloc.hpp"
#include "echoplane/onset.hpp"

namespace echoplane {

enum class ReflectorMethod { LIB, MeanLIB, MedianLIB, ETSAC };
std::string to_string(ReflectorMethod m);

struct ReflectorDiagnostics {
  // ETSAC
  int num_ellipsoids = 0;
  int tangent_count = 0;
  double tangency_sum = 0.0;
  std::size_t anchor = 0;  // ellipsoid the chosen plane was sampled from
  bool ambiguous = false;
  std::optional<Plane> alternative;
  // mean / median LIB
  double midpoint_spread = 0.0;
};

struct ReflectorEstimate {
  Plane plane{Vec3::UnitZ(), 0.0};
  ReflectorMethod method = ReflectorMethod::LIB;
  std::vector<std::size_t> used_sources;
  ReflectorDiagnostics diagnostics;
};

/// Midpoint and unit normal (image toward source) of one bisecting plane.
struct LibPlane {
  Point3 midpoint = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Plane plane() const { return Plane::from_normal_and_point(normal, midpoint); }
};

LibPlane lib_plane(const Point3& source, const Point3& image);
ReflectorEstimate lib(const Point3& source, const Point3& image, std::size_t source_index = 0);

ReflectorEstimate mean_isdar_lib(const std::vector<LibPlane>& planes,
                                 const std::vector<std::size_t>& sources = {});
ReflectorEstimate median_isdar_lib(const std::vector<LibPlane>& planes,
                                   const std::vector<std::size_t>& sources = {});

/// Ellipsoid(s) the sampled planes are made tangent to: the highest-SNR one
/// of each loudspeaker in turn, the single highest-SNR one, or the first.
enum class EtsacAnchor { PerSource, HighestSnr, First };
enum class EtsacRoots { Both, PlusOnly };

struct EtsacConfig {
  int num_planes = 10000;   // P
  double tau_t = 1.4e-3;    // on the normalized tangency coefficient
  std::uint64_t seed = 0;
  EtsacAnchor anchor = EtsacAnchor::PerSource;
  EtsacRoots roots = EtsacRoots::Both;
  int min_consensus = 4;
  /// Among consensus peaks within `ambiguity_ratio` of the best count, pick
  /// the plane nearest the array center (the lower one on a near tie).
  bool nearest_plane_prior = true;
  double ambiguity_ratio = 0.95;
  double tie_distance = 0.05;  // meters
  /// Polishes the strongest consensus peaks by a local simplex search on the
  /// truncated tangency sum (truncation tightened from 30 to 1 tau_t), then
  /// ranks them by their refined consensus.
  bool refine = true;
  int refine_evaluations = 150;  // per truncation level
};

/// One reflection ellipsoid per valid (mic, loudspeaker) channel.
struct EllipsoidSet {
  std::vector<Ellipsoid> ellipsoids;
  std::vector<Mat4> duals;  // normalized
  std::vector<double> snr_db;
  std::vector<std::size_t> source_of;
};

/// Builds ellipsoids from reflection and direct TOAs of the given loudspeakers;
/// channels masked invalid or with inconsistent path lengths are skipped.
EllipsoidSet build_ellipsoids(const std::vector<ToaCluster>& clusters, const ArrayGeometry& array,
                              const std::vector<Point3>& sources, const std::vector<std::size_t>& used,
                              double c0, double fs);

ReflectorEstimate etsac(const EllipsoidSet& set, const Point3& array_center, const EtsacConfig& cfg,
                        const std::vector<std::size_t>& used_sources = {});
ReflectorEstimate etsac(const std::vector<ToaCluster>& clusters, const ArrayGeometry& array,
                        const std::vector<Point3>& sources, const std::vector<std::size_t>& used,
                        double c0, double fs, const EtsacConfig& cfg);

/// Images of every loudspeaker mirrored across the plane.
std::vector<ImageEstimate> mirrored_etsac(const Plane& plane, const std::vector<Point3>& sources);

}  // namespace echoplane
