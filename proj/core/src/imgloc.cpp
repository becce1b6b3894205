#include "echoplane/imgloc.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "detail/nelder_mead.hpp"
#include "echoplane/error.hpp"
#include "echoplane/random.hpp"

namespace echoplane {

std::string to_string(ImageMethod m) {
  switch (m) {
    case ImageMethod::ML: return "ml";
    case ImageMethod::Multilateration: return "multilateration";
    case ImageMethod::ISDAR: return "isdar";
    case ImageMethod::MirroredETSAC: return "mirrored-etsac";
  }
  return "unknown";
}

double ml_sigma(double snr_db, double fs, double bandwidth_hz) {
  if (!std::isfinite(snr_db)) return 1.0;
  const double B = bandwidth_hz > 0.0 ? bandwidth_hz : 0.5 * fs;
  const double snr = std::pow(10.0, snr_db / 10.0);
  // Time-delay bound sqrt(3 / (8 pi^2 SNR B^2)) seconds, in samples.
  const double sigma = fs * std::sqrt(3.0 / (8.0 * M_PI * M_PI * snr * B * B));
  return std::max(1.0, sigma);
}

namespace {

double weighted_residual(const Point3& x, const std::vector<Point3>& mics, const std::vector<double>& toas,
                         const std::vector<double>& inv_var, double scale) {
  double cost = 0.0;
  for (std::size_t i = 0; i < mics.size(); ++i) {
    const double d = (x - mics[i]).norm() * scale - toas[i];
    cost += d * d * inv_var[i];
  }
  return cost;
}

struct ValidReflections {
  std::vector<Point3> mics;
  std::vector<double> toas;
  std::vector<double> snr_db;
};

ValidReflections valid_reflections(const ToaCluster& cluster, const ArrayGeometry& array) {
  if (cluster.num_channels() != array.size()) {
    throw Error(Errc::ShapeMismatch, "cluster and array disagree on the channel count");
  }
  ValidReflections v;
  for (std::size_t i = 0; i < cluster.num_channels(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!cluster.valid[i] || cluster.toas.cols() < 2 || !std::isfinite(cluster.toas(r, 1))) continue;
    v.mics.push_back(array.mics[i]);
    v.toas.push_back(cluster.toas(r, 1));
    v.snr_db.push_back(cluster.snr_db.size() > r ? cluster.snr_db(r) : std::numeric_limits<double>::quiet_NaN());
  }
  return v;
}

}  // namespace

std::size_t ml_select(const std::vector<Point3>& candidates, const std::vector<Point3>& mics,
                      const std::vector<double>& toas, const std::vector<double>& sigmas, double c0,
                      double fs) {
  if (candidates.empty()) throw Error(Errc::EmptyInput, "no candidate points");
  if (mics.size() != toas.size() || mics.size() != sigmas.size()) {
    throw Error(Errc::ShapeMismatch, "mics, toas and sigmas differ in length");
  }
  std::vector<double> inv_var(sigmas.size());
  for (std::size_t i = 0; i < sigmas.size(); ++i) inv_var[i] = 1.0 / (sigmas[i] * sigmas[i]);
  const double scale = fs / c0;
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double cost = weighted_residual(candidates[c], mics, toas, inv_var, scale);
    if (cost < best_cost) {
      best_cost = cost;
      best = c;
    }
  }
  return best;
}

ImageEstimate ml_locate(const ToaCluster& cluster, const ArrayGeometry& array, double c0, double fs,
                        const MlConfig& cfg, std::uint64_t seed, std::size_t source) {
  if (cfg.num_points < 1) throw Error(Errc::InvalidArgument, "num_points must be at least 1");
  const ValidReflections v = valid_reflections(cluster, array);
  if (v.mics.size() < 4) throw Error(Errc::InsufficientChannels, "ML needs at least 4 valid channels");

  std::vector<double> sigmas;
  for (double s : v.snr_db) sigmas.push_back(cfg.sigma_samples.value_or(ml_sigma(s, fs, cfg.bandwidth_hz)));
  double max_rho = 0.0;
  for (double t : v.toas) max_rho = std::max(max_rho, t * c0 / fs);
  const double half = 2.0 * max_rho;

  const bool fold = array_plane(array.mics).has_value() && cfg.prior != HemispherePrior::None;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Point3> cand(static_cast<std::size_t>(cfg.num_points));
  for (auto& p : cand) {
    const double x = u(rng), y = u(rng), z = u(rng);
    p = array.center + Vec3(x, y, z);
    if (fold) p = fold_to_prior(p, array.mics, cfg.prior);
  }
  Point3 best = cand[ml_select(cand, v.mics, v.toas, sigmas, c0, fs)];

  if (cfg.refine) {
    std::vector<double> inv_var(sigmas.size());
    for (std::size_t i = 0; i < sigmas.size(); ++i) inv_var[i] = 1.0 / (sigmas[i] * sigmas[i]);
    const double scale = fs / c0;
    const double start_cost = weighted_residual(best, v.mics, v.toas, inv_var, scale);
    // Search in range and arc length about the array center, where the
    // compact-array cost valley is axis aligned.
    const Vec3 off = best - array.center;
    const double r0 = std::max(off.norm(), 1e-3);
    const double az0 = std::atan2(off.y(), off.x());
    const double el0 = std::asin(std::clamp(off.z() / r0, -1.0, 1.0));
    auto to_point = [&](const Eigen::Vector3d& x) {
      const double r = x(0), az = az0 + x(1) / r0, el = el0 + x(2) / r0;
      return Point3(array.center + r * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)));
    };
    const double step = 2.0 * half / std::cbrt(static_cast<double>(cfg.num_points));
    const Eigen::Vector3d x = detail::nelder_mead<3>(
        [&](const Eigen::Vector3d& q) { return weighted_residual(to_point(q), v.mics, v.toas, inv_var, scale); },
        Eigen::Vector3d(r0, 0.0, 0.0), step, cfg.refine_evaluations);
    const Point3 refined = to_point(x);
    if (weighted_residual(refined, v.mics, v.toas, inv_var, scale) <= start_cost) best = refined;
    if (fold) best = fold_to_prior(best, array.mics, cfg.prior);
  }
  return {best, ImageMethod::ML, source};
}

std::optional<std::pair<Point3, Point3>> trilaterate(const Point3& p1, double r1, const Point3& p2,
                                                     double r2, const Point3& p3, double r3) {
  const Vec3 a = p2 - p1;
  const Vec3 b = p3 - p1;
  Vec3 n = a.cross(b);
  const double scale = std::max(a.squaredNorm(), b.squaredNorm());
  if (!(n.norm() > 1e-9 * scale)) return std::nullopt;
  n.normalize();
  // Linear part: 2 (p_i - p1) . y = |p_i - p1|^2 + r1^2 - r_i^2, with y = x - p1.
  Eigen::Matrix<double, 2, 3> A;
  A.row(0) = 2.0 * a.transpose();
  A.row(1) = 2.0 * b.transpose();
  const Eigen::Vector2d rhs(a.squaredNorm() + r1 * r1 - r2 * r2, b.squaredNorm() + r1 * r1 - r3 * r3);
  const Vec3 y0 = A.transpose() * (A * A.transpose()).ldlt().solve(rhs);
  // y0 lies in span(a, b), so |y0 + t n|^2 = |y0|^2 + t^2 = r1^2.
  const double t2 = r1 * r1 - y0.squaredNorm();
  if (t2 < 0.0) {
    if (t2 < -1e-12 * r1 * r1) return std::nullopt;
    return std::make_pair(Point3(p1 + y0), Point3(p1 + y0));
  }
  const double t = std::sqrt(t2);
  return std::make_pair(Point3(p1 + y0 + t * n), Point3(p1 + y0 - t * n));
}

MultilatResult multilaterate(const ToaCluster& cluster, const ArrayGeometry& array, double c0, double fs,
                             int combos, std::uint64_t seed, std::size_t source, HemispherePrior prior) {
  if (combos < 1) throw Error(Errc::InvalidArgument, "combos must be at least 1");
  const ValidReflections v = valid_reflections(cluster, array);
  const std::size_t n = v.mics.size();
  if (n < 3) throw Error(Errc::InsufficientChannels, "multilateration needs at least 3 valid channels");

  const bool planar = array_plane(array.mics).has_value();
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  Point3 sum = Point3::Zero();
  int survivors = 0;
  for (int c = 0; c < combos; ++c) {
    std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    while (j == i) j = pick(rng);
    while (k == i || k == j) k = pick(rng);
    const double s = c0 / fs;
    const auto sol = trilaterate(v.mics[i], v.toas[i] * s, v.mics[j], v.toas[j] * s, v.mics[k], v.toas[k] * s);
    if (!sol) continue;
    const double da = (sol->first - array.center).norm();
    const double db = (sol->second - array.center).norm();
    Point3 chosen = da >= db ? sol->first : sol->second;
    // Mirror pairs across the array plane are equidistant; the prior decides.
    if (std::abs(da - db) <= 1e-9 * std::max(da, db) || planar) {
      chosen = fold_to_prior(chosen, array.mics, prior);
    }
    sum += chosen;
    ++survivors;
  }
  if (survivors == 0) throw Error(Errc::AllCombinationsFailed, "no three-sphere combination intersected");
  return {{sum / survivors, ImageMethod::Multilateration, source}, survivors};
}

ImageEstimate isdar(double rho, const Doa& doa, const Point3& center, std::size_t source) {
  return {center + rho * doa.direction(), ImageMethod::ISDAR, source};
}

ImageEstimate isdar(const ToaCluster& cluster, const Doa& doa, const ArrayGeometry& array, double c0,
                    double fs, std::size_t source) {
  return isdar(cluster.mean_toa(1) * c0 / fs, doa, array.center, source);
}

double toa_pattern_residual(const ToaCluster& cluster, int k, const Doa& doa, const ArrayGeometry& array,
                            double c0, double fs) {
  if (cluster.num_channels() != array.size()) throw Error(Errc::ShapeMismatch, "cluster size differs from array");
  const Point3 image = array.center + cluster.mean_toa(k) * c0 / fs * doa.direction();
  std::vector<double> r;
  for (std::size_t i = 0; i < array.size(); ++i) {
    const double t = cluster.toas(static_cast<Eigen::Index>(i), k);
    if (!cluster.valid[i] || !std::isfinite(t)) continue;
    r.push_back(t - (image - array.mics[i]).norm() * fs / c0);
  }
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(r.size()));
}

double curvature_corrected_range(const ToaCluster& cluster, const Doa& doa, const ArrayGeometry& array,
                                 double c0, double fs) {
  if (cluster.num_channels() != array.size()) throw Error(Errc::ShapeMismatch, "cluster size differs from array");
  const double rho = cluster.mean_toa(1) * c0 / fs;
  const Vec3 u = doa.direction();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < array.size(); ++i) {
    if (!cluster.valid[i] || !std::isfinite(cluster.toas(static_cast<Eigen::Index>(i), 1))) continue;
    const Vec3 d = array.mics[i] - array.center;
    sum += d.squaredNorm() - u.dot(d) * u.dot(d);
    ++n;
  }
  return rho - sum / static_cast<double>(n) / (2.0 * rho);
}

}  // namespace echoplane
