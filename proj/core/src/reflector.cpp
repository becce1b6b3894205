#include "echoplane/reflector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "detail/nelder_mead.hpp"
#include "echoplane/error.hpp"
#include "echoplane/random.hpp"

namespace echoplane {

std::string to_string(ReflectorMethod m) {
  switch (m) {
    case ReflectorMethod::LIB: return "lib";
    case ReflectorMethod::MeanLIB: return "mean-lib";
    case ReflectorMethod::MedianLIB: return "median-lib";
    case ReflectorMethod::ETSAC: return "etsac";
  }
  return "unknown";
}

LibPlane lib_plane(const Point3& source, const Point3& image) {
  const Vec3 d = source - image;
  const double n = d.norm();
  if (!(n > 1e-12)) throw Error(Errc::CoincidentPoints, "source and image coincide");
  return {0.5 * (source + image), d / n};
}

ReflectorEstimate lib(const Point3& source, const Point3& image, std::size_t source_index) {
  ReflectorEstimate r;
  r.plane = lib_plane(source, image).plane();
  r.method = ReflectorMethod::LIB;
  r.used_sources = {source_index};
  return r;
}

namespace {

std::vector<std::size_t> default_indices(const std::vector<std::size_t>& given, std::size_t n) {
  if (!given.empty()) {
    if (given.size() != n) throw Error(Errc::ShapeMismatch, "source index list differs in length");
    return given;
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

struct MeanParts {
  Point3 midpoint = Point3::Zero();
  Vec3 normal_sum = Vec3::Zero();
  double spread = 0.0;
};

MeanParts mean_parts(const std::vector<LibPlane>& planes) {
  if (planes.empty()) throw Error(Errc::EmptyInput, "no planes to combine");
  MeanParts m;
  for (const auto& p : planes) {
    m.midpoint += p.midpoint;
    m.normal_sum += p.normal;
  }
  m.midpoint /= static_cast<double>(planes.size());
  for (const auto& p : planes) m.spread += (p.midpoint - m.midpoint).squaredNorm();
  m.spread = std::sqrt(m.spread / static_cast<double>(planes.size()));
  return m;
}

}  // namespace

ReflectorEstimate mean_isdar_lib(const std::vector<LibPlane>& planes, const std::vector<std::size_t>& sources) {
  const MeanParts m = mean_parts(planes);
  const double len = m.normal_sum.norm();
  if (len < 1e-9) throw Error(Errc::ZeroMeanNormal, "normals cancel out");
  ReflectorEstimate r;
  r.plane = Plane::from_normal_and_point(m.normal_sum / len, m.midpoint);
  r.method = ReflectorMethod::MeanLIB;
  r.used_sources = default_indices(sources, planes.size());
  r.diagnostics.midpoint_spread = m.spread;
  return r;
}

ReflectorEstimate median_isdar_lib(const std::vector<LibPlane>& planes, const std::vector<std::size_t>& sources) {
  const MeanParts m = mean_parts(planes);
  const double len = m.normal_sum.norm();
  const Vec3 mean_normal = len > 0.0 ? Vec3(m.normal_sum / len) : Vec3::Zero();
  std::size_t bm = 0, bv = 0;
  for (std::size_t j = 1; j < planes.size(); ++j) {
    if ((planes[j].midpoint - m.midpoint).norm() < (planes[bm].midpoint - m.midpoint).norm()) bm = j;
    if ((planes[j].normal - mean_normal).norm() < (planes[bv].normal - mean_normal).norm()) bv = j;
  }
  ReflectorEstimate r;
  r.plane = Plane::from_normal_and_point(planes[bv].normal, planes[bm].midpoint);
  r.method = ReflectorMethod::MedianLIB;
  r.used_sources = default_indices(sources, planes.size());
  r.diagnostics.midpoint_spread = m.spread;
  return r;
}

EllipsoidSet build_ellipsoids(const std::vector<ToaCluster>& clusters, const ArrayGeometry& array,
                              const std::vector<Point3>& sources, const std::vector<std::size_t>& used,
                              double c0, double fs) {
  if (clusters.size() != sources.size()) throw Error(Errc::ShapeMismatch, "one cluster per loudspeaker expected");
  EllipsoidSet out;
  const double s = c0 / fs;
  for (std::size_t j : used) {
    const ToaCluster& c = clusters.at(j);
    if (c.num_channels() != array.size()) throw Error(Errc::ShapeMismatch, "cluster size differs from array");
    for (std::size_t i = 0; i < c.num_channels(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (!c.valid[i] || c.toas.cols() < 2) continue;
      const double rho0 = c.toas(r, 0) * s;
      const double rho = c.toas(r, 1) * s;
      if (!std::isfinite(rho0) || !std::isfinite(rho)) continue;
      try {
        Ellipsoid e = ellipsoid_from_focus_pair(array.mics[i], sources[j], rho, rho0);
        out.duals.push_back(normalized_dual(e));
        out.ellipsoids.push_back(std::move(e));
        out.snr_db.push_back(c.snr_db.size() > r ? c.snr_db(r) : std::numeric_limits<double>::quiet_NaN());
        out.source_of.push_back(j);
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateEllipsoid) throw;
      }
    }
  }
  return out;
}

namespace {

// Upper triangle of a symmetric 4x4, off-diagonals doubled.
using Packed = std::array<double, 10>;

Packed pack(const Mat4& A) {
  return {A(0, 0), A(1, 1), A(2, 2), A(3, 3), 2 * A(0, 1), 2 * A(0, 2), 2 * A(0, 3),
          2 * A(1, 2), 2 * A(1, 3), 2 * A(2, 3)};
}

inline double quad(const Packed& a, const Vec4& p) {
  const double x = p(0), y = p(1), z = p(2), w = p(3);
  return a[0] * x * x + a[1] * y * y + a[2] * z * z + a[3] * w * w + a[4] * x * y + a[5] * x * z +
         a[6] * x * w + a[7] * y * z + a[8] * y * w + a[9] * z * w;
}

struct Candidate {
  std::size_t anchor = 0;
  int count = 0;
  double sum = 0.0;
  Vec3 normal = Vec3::UnitZ();
  double d = 0.0;
};

bool better(const Candidate& a, const Candidate& b) {
  return a.count > b.count || (a.count == b.count && a.sum < b.sum);
}

// Orient so that the array center lies on the positive side.
Plane canonical(const Vec3& n, double d, const Point3& center) {
  const double len = n.norm();
  Plane p(n / len, d / len);
  return p.signed_distance(center) < 0.0 ? p.flipped() : p;
}

// Plane through all ellipsoid foci when they lie within `tol` of one.
std::optional<Plane> focal_plane(const std::vector<Ellipsoid>& ells, double tol) {
  std::vector<Point3> pts;
  for (const auto& e : ells) {
    pts.push_back(e.focus_a());
    pts.push_back(e.focus_b());
  }
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Vec3 n = es.eigenvectors().col(0);
  if (es.eigenvalues()(1) < 1e-6) return std::nullopt;  // collinear or a single point
  for (const auto& p : pts) {
    if (std::abs(n.dot(p - c)) > tol) return std::nullopt;
  }
  return Plane::from_normal_and_point(n, c);
}

Plane mirror_plane(const Plane& p, const Plane& m) {
  const Vec3 n = p.normal() - 2.0 * p.normal().dot(m.normal()) * m.normal();
  const Point3 q = reflect_point(-p.offset() * p.normal(), m);
  return Plane::from_normal_and_point(n, q);
}

Plane refine_plane(const Plane& start, const std::vector<Packed>& packed, const EtsacConfig& cfg) {
  Plane cur = start;
  for (const double level : {30.0, 10.0, 3.0, 1.0}) {
    const double cap = level * cfg.tau_t;
    const Vec3 n0 = cur.normal();
    const Vec3 e1 = n0.unitOrthogonal();
    const Vec3 e2 = n0.cross(e1);
    const double d0 = cur.offset();
    auto plane_of = [&](const Eigen::Vector3d& x) {
      const Vec3 n = (n0 + x(0) * e1 + x(1) * e2).normalized();
      return Vec4(n.x(), n.y(), n.z(), d0 + x(2));
    };
    auto cost = [&](const Eigen::Vector3d& x) {
      const Vec4 pl = plane_of(x);
      double s = 0.0;
      for (const auto& a : packed) s += std::min(std::abs(quad(a, pl)), cap);
      return s;
    };
    const Eigen::Vector3d best =
        detail::nelder_mead<3>(cost, Eigen::Vector3d::Zero(), 0.01 * level / 30.0 + 1e-3, cfg.refine_evaluations);
    if (cost(best) <= cost(Eigen::Vector3d::Zero())) {
      const Vec4 pl = plane_of(best);
      cur = Plane(pl.head<3>(), pl(3));
    }
  }
  return cur;
}

}  // namespace

ReflectorEstimate etsac(const EllipsoidSet& set, const Point3& array_center, const EtsacConfig& cfg,
                        const std::vector<std::size_t>& used_sources) {
  if (cfg.num_planes < 1) throw Error(Errc::InvalidArgument, "num_planes must be at least 1");
  if (!(cfg.tau_t > 0.0)) throw Error(Errc::InvalidArgument, "tau_t must be positive");
  const std::size_t N = set.duals.size();
  if (N == 0) throw Error(Errc::NoEllipsoids, "no valid ellipsoid");

  auto snr = [&](std::size_t n) {
    return std::isfinite(set.snr_db[n]) ? set.snr_db[n] : -std::numeric_limits<double>::max();
  };
  std::vector<std::size_t> anchors;
  if (cfg.anchor == EtsacAnchor::First) {
    anchors.push_back(0);
  } else if (cfg.anchor == EtsacAnchor::HighestSnr) {
    std::size_t best = 0;
    for (std::size_t n = 1; n < N; ++n) {
      if (snr(n) > snr(best)) best = n;
    }
    anchors.push_back(best);
  } else {
    // One per loudspeaker, in order of first appearance.
    std::vector<std::size_t> order;
    for (std::size_t n = 0; n < N; ++n) {
      auto it = std::find_if(order.begin(), order.end(),
                             [&](std::size_t a) { return set.source_of[a] == set.source_of[n]; });
      if (it == order.end()) {
        order.push_back(n);
      } else if (snr(n) > snr(*it)) {
        *it = n;
      }
    }
    anchors = order;
  }
  std::vector<Packed> packed;
  packed.reserve(N);
  for (const auto& A : set.duals) packed.push_back(pack(A));

  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss;
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(cfg.num_planes) * 2);
  for (int p = 0; p < cfg.num_planes; ++p) {
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const double len = v.norm();
    if (!(len > 1e-12)) continue;
    v /= len;
    TangentOffsets off;
    try {
      off = tangent_plane_offset(v, set.duals[anchors[static_cast<std::size_t>(p) % anchors.size()]]);
    } catch (const Error&) {
      continue;
    }
    const int nroots = cfg.roots == EtsacRoots::Both ? 2 : 1;
    for (int r = 0; r < nroots; ++r) {
      Candidate c;
      c.anchor = anchors[static_cast<std::size_t>(p) % anchors.size()];
      c.normal = v;
      c.d = r == 0 ? off.d_plus : off.d_minus;
      const Vec4 plane(v.x(), v.y(), v.z(), c.d);
      for (std::size_t n = 0; n < N; ++n) {
        const double t = std::abs(quad(packed[n], plane));
        c.sum += t;
        if (t < cfg.tau_t) ++c.count;
      }
      cands.push_back(c);
    }
  }
  if (cands.empty()) throw Error(Errc::NoTangentConsensus, "no candidate plane");
  std::stable_sort(cands.begin(), cands.end(), better);
  const Candidate& top = cands.front();
  const int needed = std::min<int>(cfg.min_consensus, static_cast<int>(N));
  if (!cfg.refine && top.count < needed) throw Error(Errc::NoTangentConsensus, "too few tangent ellipsoids");

  auto score = [&](const Plane& pl) {
    Candidate c;
    c.normal = pl.normal();
    c.d = pl.offset();
    for (const auto& a : packed) {
      const double t = std::abs(quad(a, pl.coeffs()));
      c.sum += t;
      if (t < cfg.tau_t) ++c.count;
    }
    return c;
  };

  std::vector<std::pair<Candidate, Plane>> peaks;
  auto add_peak = [&](const Candidate& c, const Plane& pl) {
    for (const auto& pk : peaks) {
      if (pl.normal().dot(pk.second.normal()) > std::cos(10.0 * M_PI / 180.0) &&
          std::abs(pl.offset() - pk.second.offset()) < 0.1) {
        return;
      }
    }
    peaks.emplace_back(c, pl);
  };
  // Sampled counts are noisy under a tight threshold, so with refinement a
  // few distinct runners-up are polished before ranking.
  const std::size_t max_peaks = cfg.refine ? 8 : cands.size();
  const double floor_count = cfg.refine ? 0.0 : cfg.ambiguity_ratio * top.count;
  for (const Candidate& c : cands) {
    if (c.count < floor_count || peaks.size() >= max_peaks) break;
    add_peak(c, canonical(c.normal, c.d, array_center));
  }
  // With every focus on one plane, each tangent plane has an equally tangent
  // mirror image across it.
  if (const auto fp = focal_plane(set.ellipsoids, 0.02)) {
    const std::size_t n = peaks.size();
    for (std::size_t k = 0; k < n; ++k) {
      const Plane m = mirror_plane(peaks[k].second, *fp);
      Candidate c = score(m);
      c.anchor = peaks[k].first.anchor;
      add_peak(c, canonical(m.normal(), m.offset(), array_center));
    }
  }
  if (cfg.refine) {
    auto raw = std::move(peaks);
    peaks.clear();
    for (auto& [c, pl] : raw) {
      const Plane refined = refine_plane(pl, packed, cfg);
      const Plane cp = canonical(refined.normal(), refined.offset(), array_center);
      Candidate rc = score(cp);
      rc.anchor = c.anchor;
      pl = cp;
      c = rc;
    }
    std::stable_sort(raw.begin(), raw.end(), [&](const auto& x, const auto& y) { return better(x.first, y.first); });
    for (const auto& [c, pl] : raw) add_peak(c, pl);
    if (peaks.front().first.count < needed) {
      throw Error(Errc::NoTangentConsensus, "too few tangent ellipsoids");
    }
    const double keep = cfg.ambiguity_ratio * peaks.front().first.count;
    std::erase_if(peaks, [&](const auto& pk) { return pk.first.count < keep; });
  }

  std::size_t chosen = 0;
  if (cfg.nearest_plane_prior && peaks.size() > 1) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& pk : peaks) nearest = std::min(nearest, std::abs(pk.second.signed_distance(array_center)));
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < peaks.size(); ++k) {
      const Plane& pl = peaks[k].second;
      const double dist = std::abs(pl.signed_distance(array_center));
      if (dist > nearest + cfg.tie_distance) continue;
      const double z = project_point_onto_plane(array_center, pl).z();
      if (z < lowest) {
        lowest = z;
        chosen = k;
      }
    }
  }

  ReflectorEstimate r;
  r.plane = peaks[chosen].second;
  r.diagnostics.tangent_count = peaks[chosen].first.count;
  r.diagnostics.tangency_sum = peaks[chosen].first.sum;
  r.method = ReflectorMethod::ETSAC;
  r.used_sources = used_sources;
  r.diagnostics.num_ellipsoids = static_cast<int>(N);
  r.diagnostics.anchor = peaks[chosen].first.anchor;
  r.diagnostics.ambiguous = peaks.size() > 1;
  if (peaks.size() > 1) r.diagnostics.alternative = peaks[chosen == 0 ? 1 : 0].second;
  return r;
}

ReflectorEstimate etsac(const std::vector<ToaCluster>& clusters, const ArrayGeometry& array,
                        const std::vector<Point3>& sources, const std::vector<std::size_t>& used, double c0,
                        double fs, const EtsacConfig& cfg) {
  const EllipsoidSet set = build_ellipsoids(clusters, array, sources, used, c0, fs);
  return etsac(set, array.center, cfg, used);
}

std::vector<ImageEstimate> mirrored_etsac(const Plane& plane, const std::vector<Point3>& sources) {
  std::vector<ImageEstimate> out;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    out.push_back({reflect_point(sources[j], plane), ImageMethod::MirroredETSAC, j});
  }
  return out;
}

}  // namespace echoplane
