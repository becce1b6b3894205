#include "echoplane/beamform.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "echoplane/error.hpp"

namespace echoplane {

namespace {

constexpr int kSincHalf = 8;
constexpr double kDeg = M_PI / 180.0;

double windowed_sinc(double d) {
  if (std::abs(d) >= kSincHalf + 1) return 0.0;
  const double s = d == 0.0 ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
  return s * 0.5 * (1.0 + std::cos(M_PI * d / (kSincHalf + 1)));
}

// Vertex offset of a parabola through (-1, a), (0, b), (1, c), in steps.
double vertex(double a, double b, double c) {
  const double den = a - 2.0 * b + c;
  if (!(den < 0.0)) return 0.0;
  return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
}

}  // namespace

Doa Doa::from_direction(const Vec3& u) {
  const Vec3 v = u.normalized();
  Doa d;
  d.azimuth = std::atan2(v.y(), v.x());
  if (d.azimuth <= -M_PI) d.azimuth += 2.0 * M_PI;
  d.elevation = std::asin(std::clamp(v.z(), -1.0, 1.0));
  return d;
}

Vec3 Doa::direction() const {
  return {std::cos(azimuth) * std::cos(elevation), std::sin(azimuth) * std::cos(elevation),
          std::sin(elevation)};
}

int segment_taps(double seconds, double fs) {
  int n = static_cast<int>(std::lround(seconds * fs));
  if (n % 2 == 0) ++n;
  return std::max(n, 3);
}

Segment segment(const RirSet& set, const ToaCluster& cluster, std::size_t source, int k,
                double window_seconds) {
  if (cluster.num_channels() != set.num_mics()) {
    throw Error(Errc::ShapeMismatch, "cluster and RirSet disagree on the channel count");
  }
  if (k < 0 || k >= cluster.toas.cols()) throw Error(Errc::InvalidArgument, "reflection index out of range");
  Segment seg;
  for (std::size_t i = 0; i < cluster.num_channels(); ++i) {
    if (cluster.valid[i] && std::isfinite(cluster.toas(static_cast<Eigen::Index>(i), k))) seg.mics.push_back(i);
  }
  if (seg.mics.empty()) throw Error(Errc::NoValidChannels, "no valid channel to segment");
  double sum = 0.0;
  for (std::size_t i : seg.mics) sum += cluster.toas(static_cast<Eigen::Index>(i), k);
  seg.center = sum / static_cast<double>(seg.mics.size());

  const int taps = segment_taps(window_seconds, set.fs);
  const int h = taps / 2;
  seg.start = std::lround(seg.center) - h;
  seg.data.setZero(taps, static_cast<Eigen::Index>(seg.mics.size()));
  for (std::size_t c = 0; c < seg.mics.size(); ++c) {
    const auto& x = set.channel(seg.mics[c], source);
    for (int n = 0; n < taps; ++n) {
      const long idx = seg.start + n;
      if (idx < 0 || idx >= static_cast<long>(x.size())) continue;
      const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (taps - 1));
      seg.data(n, static_cast<Eigen::Index>(c)) = w * x[static_cast<std::size_t>(idx)];
    }
  }
  return seg;
}

ArrayShape array_shape(const std::vector<Point3>& mics) {
  if (mics.size() < 3) return ArrayShape::Collinear;
  Point3 mean = Point3::Zero();
  for (const auto& m : mics) mean += m;
  mean /= static_cast<double>(mics.size());
  Eigen::MatrixXd A(static_cast<Eigen::Index>(mics.size()), 3);
  for (std::size_t i = 0; i < mics.size(); ++i) A.row(static_cast<Eigen::Index>(i)) = (mics[i] - mean).transpose();
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::MatrixXd>(A).singularValues();
  if (!(sv(0) > 0.0)) return ArrayShape::Collinear;
  if (sv(1) <= 1e-9 * sv(0)) return ArrayShape::Collinear;
  if (sv(2) <= 1e-9 * sv(0)) return ArrayShape::Planar;
  return ArrayShape::Volumetric;
}

std::optional<Plane> array_plane(const std::vector<Point3>& mics) {
  if (array_shape(mics) != ArrayShape::Planar) return std::nullopt;
  Point3 mean = Point3::Zero();
  for (const auto& m : mics) mean += m;
  mean /= static_cast<double>(mics.size());
  Eigen::MatrixXd A(static_cast<Eigen::Index>(mics.size()), 3);
  for (std::size_t i = 0; i < mics.size(); ++i) A.row(static_cast<Eigen::Index>(i)) = (mics[i] - mean).transpose();
  Vec3 n = Eigen::JacobiSVD<Eigen::MatrixXd>(A, Eigen::ComputeThinV).matrixV().col(2);
  for (int k : {2, 0, 1}) {
    if (std::abs(n(k)) > 1e-12) {
      if (n(k) < 0.0) n = -n;
      break;
    }
  }
  return Plane::from_normal_and_point(n, mean);
}

Point3 fold_to_prior(const Point3& p, const std::vector<Point3>& mics, HemispherePrior prior) {
  if (prior == HemispherePrior::None) return p;
  const auto plane = array_plane(mics);
  if (!plane) return p;
  const double s = plane->signed_distance(p);
  if ((prior == HemispherePrior::Below && s > 0.0) || (prior == HemispherePrior::Above && s < 0.0)) {
    return reflect_point(p, *plane);
  }
  return p;
}

SteeredPower::SteeredPower(const Segment& seg, const ArrayGeometry& array, double c0, double fs,
                           int upsample, double range_samples)
    : upsample_(std::max(1, upsample)), range_(range_samples) {
  const std::size_t n = seg.mics.size();
  pos_.reserve(n);
  for (std::size_t i : seg.mics) pos_.push_back((array.mics.at(i) - array.center) * (fs / c0));
  double span = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) span = std::max(span, (pos_[a] - pos_[b]).norm());
  }
  max_lag_ = static_cast<int>(std::ceil(span)) + 1;
  const int ext = max_lag_ + kSincHalf + 1;
  const int taps = static_cast<int>(seg.data.rows());
  row_ = static_cast<std::size_t>(2 * max_lag_ * upsample_ + 1);
  table_.assign(n * (n - 1) / 2 * row_, 0.0);

  // Sinc weights depend only on the fractional phase of the fine lag.
  const int fine = static_cast<int>(row_);
  const int width = 2 * kSincHalf + 2;
  std::vector<double> weights(static_cast<std::size_t>(upsample_ * width));
  for (int ph = 0; ph < upsample_; ++ph) {
    const double frac = static_cast<double>(ph) / upsample_;
    for (int w = 0; w < width; ++w) {
      weights[static_cast<std::size_t>(ph * width + w)] = windowed_sinc(frac - (w - kSincHalf));
    }
  }
  std::vector<double> xc(static_cast<std::size_t>(2 * ext + 1));
  std::size_t p = 0;
  for (std::size_t a = 0; a < n; ++a) {
    const double* xa = seg.data.col(static_cast<Eigen::Index>(a)).data();
    for (std::size_t b = a + 1; b < n; ++b, ++p) {
      const double* xb = seg.data.col(static_cast<Eigen::Index>(b)).data();
      // xc[t] = sum_m xa(m + t) xb(m)
      for (int t = -ext; t <= ext; ++t) {
        double s = 0.0;
        const int lo = std::max(0, -t);
        const int hi = std::min(taps, taps - t);
        for (int m = lo; m < hi; ++m) s += xa[m + t] * xb[m];
        xc[static_cast<std::size_t>(t + ext)] = s;
      }
      double* out = &table_[p * row_];
      for (int q = 0; q < fine; ++q) {
        const int shifted = q - max_lag_ * upsample_ + ext * upsample_;  // non-negative
        const int t0 = shifted / upsample_ - ext;
        const int ph = shifted % upsample_;
        const double* wv = &weights[static_cast<std::size_t>(ph * width)];
        const double* xv = &xc[static_cast<std::size_t>(t0 - kSincHalf + ext)];
        double v = 0.0;
        for (int w = 0; w < width; ++w) v += xv[w] * wv[w];
        out[q] = v;
      }
    }
  }
}

double SteeredPower::operator()(const Vec3& u) const {
  const std::size_t n = pos_.size();
  thread_local std::vector<double> proj;
  proj.resize(n);
  if (range_ > 0.0) {
    // Lead of mic a over the center for a source at range_ along u.
    const Vec3 src = range_ * u;
    for (std::size_t a = 0; a < n; ++a) proj[a] = (range_ - (src - pos_[a]).norm()) * upsample_;
  } else {
    for (std::size_t a = 0; a < n; ++a) proj[a] = pos_[a].dot(u) * upsample_;
  }
  const double offset = static_cast<double>(max_lag_ * upsample_);
  const double top = static_cast<double>(row_ - 1);
  double total = 0.0;
  std::size_t p = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b, ++p) {
      // Aligning a and b needs lag (pos_b - pos_a) . u
      const double x = std::clamp(proj[b] - proj[a] + offset, 0.0, top);
      const auto i = static_cast<std::size_t>(x);
      const double f = x - static_cast<double>(i);
      const double* row = &table_[p * row_];
      total += i + 1 < row_ ? row[i] + f * (row[i + 1] - row[i]) : row[i];
    }
  }
  return total;
}

std::vector<Doa> dsb_doa_candidates(const Segment& seg, const ArrayGeometry& array, double c0, double fs,
                                    const DsbConfig& cfg, double min_ratio) {
  if (!(cfg.grid_deg > 0.0)) throw Error(Errc::InvalidArgument, "grid resolution must be positive");
  if (seg.mics.size() < 4) throw Error(Errc::InsufficientChannels, "DSB needs at least 4 channels");
  std::vector<Point3> used;
  for (std::size_t i : seg.mics) used.push_back(array.mics.at(i));
  const ArrayShape shape = array_shape(used);
  if (shape == ArrayShape::Collinear) throw Error(Errc::DegenerateArray, "collinear microphones");

  const SteeredPower power(seg, array, c0, fs, cfg.upsample, cfg.near_field ? seg.center : 0.0);
  double el_lo = -90.0, el_hi = 90.0;
  if (shape == ArrayShape::Planar) {
    if (cfg.prior == HemispherePrior::Below) el_hi = 0.0;
    if (cfg.prior == HemispherePrior::Above) el_lo = 0.0;
  }
  auto dir = [](double az_deg, double el_deg) {
    return Doa{az_deg * kDeg, el_deg * kDeg}.direction();
  };

  const double g = cfg.grid_deg;
  const int n_az = std::max(1, static_cast<int>(std::lround(360.0 / g)));
  const int n_el = static_cast<int>(std::floor((el_hi - el_lo) / g + 1e-9)) + 1;
  std::vector<double> grid(static_cast<std::size_t>(n_az * n_el));
  auto at = [&](int e, int a) -> double& {
    return grid[static_cast<std::size_t>(e * n_az + ((a % n_az) + n_az) % n_az)];
  };
  double best = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < n_el; ++e) {
    const double el = el_lo + e * g;
    // At the poles azimuth is meaningless.
    const bool pole = std::abs(std::abs(el) - 90.0) < 1e-9;
    for (int a = 0; a < n_az; ++a) {
      at(e, a) = pole && a > 0 ? at(e, 0) : power(dir(-180.0 + a * g, el));
      best = std::max(best, at(e, a));
    }
  }

  // Grid cells that beat all eight neighbours (azimuth wraps around).
  struct Peak {
    double p, az, el;
  };
  std::vector<Peak> peaks;
  for (int e = 0; e < n_el; ++e) {
    for (int a = 0; a < n_az; ++a) {
      const double c = at(e, a);
      if (c < min_ratio * best) continue;
      bool is_max = true;
      for (int de = -1; de <= 1 && is_max; ++de) {
        for (int da = -1; da <= 1; ++da) {
          if ((de == 0 && da == 0) || e + de < 0 || e + de >= n_el) continue;
          const double v = at(e + de, a + da);
          // Strict on one side so plateaus yield a single peak.
          if (v > c || (v == c && (de < 0 || (de == 0 && da < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({c, -180.0 + a * g, el_lo + e * g});
      if (std::abs(std::abs(el_lo + e * g) - 90.0) < 1e-9) break;
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.p > y.p; });

  std::vector<Doa> out;
  for (Peak pk : peaks) {
    // Quadratic refinement around the cell, then once more at a finer step.
    for (double step : {g, g / 8.0}) {
      const double c = power(dir(pk.az, pk.el));
      const double da = vertex(power(dir(pk.az - step, pk.el)), c, power(dir(pk.az + step, pk.el)));
      double de = 0.0;
      if (pk.el - step >= -90.0 && pk.el + step <= 90.0) {
        de = vertex(power(dir(pk.az, pk.el - step)), c, power(dir(pk.az, pk.el + step)));
      }
      pk.az += da * step;
      pk.el = std::clamp(pk.el + de * step, el_lo, el_hi);
    }
    out.push_back(Doa::from_direction(dir(pk.az, pk.el)));
  }
  return out;
}

Doa dsb_doa(const Segment& seg, const ArrayGeometry& array, double c0, double fs, const DsbConfig& cfg) {
  return dsb_doa_candidates(seg, array, c0, fs, cfg, 1.0).front();
}

}  // namespace echoplane
