#include "echoplane/onset.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "echoplane/error.hpp"

namespace echoplane {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int window_taps(double seconds, double fs) {
  int n = static_cast<int>(std::lround(seconds * fs));
  if (n % 2 == 0) ++n;
  return std::max(n, 3);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

// Band-limited reconstruction of x at fractional position t.
double sinc_interp(std::span<const float> x, double t) {
  constexpr int kHalf = 12;
  const auto c = static_cast<std::ptrdiff_t>(std::floor(t));
  double v = 0.0;
  for (std::ptrdiff_t n = c - kHalf + 1; n <= c + kHalf; ++n) {
    if (n < 0 || n >= static_cast<std::ptrdiff_t>(x.size())) continue;
    const double d = t - static_cast<double>(n);
    const double sinc = d == 0.0 ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
    const double win = 0.5 * (1.0 + std::cos(M_PI * d / (kHalf + 1)));
    v += x[static_cast<std::size_t>(n)] * sinc * win;
  }
  return v;
}

// Sub-sample peak of |x| near integer peak p: parabolic start, then a
// golden-section search on the band-limited reconstruction.
double refine_peak(std::span<const float> x, std::size_t p) {
  if (p == 0 || p + 1 >= x.size()) return static_cast<double>(p);
  const double a = std::abs(x[p - 1]);
  const double b = std::abs(x[p]);
  const double c = std::abs(x[p + 1]);
  const double den = a - 2.0 * b + c;
  const double start = den < 0.0 ? static_cast<double>(p) + std::clamp(0.5 * (a - c) / den, -0.5, 0.5)
                                  : static_cast<double>(p);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = start - 0.6, hi = start + 0.6;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = std::abs(sinc_interp(x, x1)), f2 = std::abs(sinc_interp(x, x2));
  for (int it = 0; it < 30; ++it) {
    if (f1 > f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = std::abs(sinc_interp(x, x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = std::abs(sinc_interp(x, x2));
    }
  }
  return 0.5 * (lo + hi);
}

std::size_t local_peak(std::span<const float> x, double pos, std::ptrdiff_t radius) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto c = static_cast<std::ptrdiff_t>(std::lround(pos));
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(c - radius, 0, n - 1);
  const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(c + radius, 0, n - 1);
  std::ptrdiff_t best = lo;
  for (std::ptrdiff_t i = lo; i <= hi; ++i) {
    if (std::abs(x[static_cast<std::size_t>(i)]) > std::abs(x[static_cast<std::size_t>(best)])) best = i;
  }
  return static_cast<std::size_t>(best);
}

// Local maxima of |x| within `radius` of pos that reach half the largest
// one, at least 3 samples apart, in ascending order.
std::vector<std::size_t> significant_peaks(std::span<const float> x, double pos, std::ptrdiff_t radius) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto c = static_cast<std::ptrdiff_t>(std::lround(pos));
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(c - radius, 0, n - 1);
  const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(c + radius, 0, n - 1);
  auto a = [&](std::ptrdiff_t i) { return std::abs(x[static_cast<std::size_t>(i)]); };
  const std::size_t top = local_peak(x, pos, radius);
  const float floor_amp = 0.5f * std::abs(x[top]);
  std::vector<std::size_t> maxima;
  for (std::ptrdiff_t i = lo; i <= hi; ++i) {
    const bool left = i == 0 || a(i) > a(i - 1);
    const bool right = i + 1 >= n || a(i) >= a(i + 1);
    if (left && right && a(i) >= floor_amp && a(i) > 0.0f) maxima.push_back(static_cast<std::size_t>(i));
  }
  // Strongest first, dropping maxima too close to a stronger one.
  std::sort(maxima.begin(), maxima.end(), [&](std::size_t p, std::size_t q) { return std::abs(x[p]) > std::abs(x[q]); });
  std::vector<std::size_t> kept;
  for (std::size_t m : maxima) {
    bool near = false;
    for (std::size_t k : kept) near = near || (m > k ? m - k : k - m) < 3;
    if (!near) kept.push_back(m);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// Robust noise scale: MAD of the samples. Echoes are sparse, so the median
// is set by the noise floor.
double noise_sigma(std::span<const float> x) {
  std::vector<float> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = std::abs(x[i]);
  const auto mid = a.begin() + static_cast<std::ptrdiff_t>(a.size() / 2);
  std::nth_element(a.begin(), mid, a.end());
  return 1.4826 * static_cast<double>(*mid);
}

double channel_snr_db(std::span<const float> x, double toa_direct, double toa_reflection) {
  if (x.empty() || !std::isfinite(toa_direct)) return kNaN;
  const double at = std::isfinite(toa_reflection) ? toa_reflection : toa_direct;
  const std::size_t p = local_peak(x, at, 3);
  const double signal = static_cast<double>(x[p]) * x[p];
  std::size_t lo = 0, hi = 0;
  const double pre_end = std::floor(toa_direct) - 20.0;
  if (pre_end >= 32.0) {
    hi = static_cast<std::size_t>(pre_end);
  } else {
    lo = x.size() - x.size() / 4;
    hi = x.size();
  }
  double noise = 0.0;
  for (std::size_t i = lo; i < hi; ++i) noise += static_cast<double>(x[i]) * x[i];
  noise /= static_cast<double>(std::max<std::size_t>(1, hi - lo));
  return std::min(200.0, 10.0 * std::log10(signal / std::max(noise, 1e-300)));
}

}  // namespace

void OnsetConfig::validate() const {
  if (!(tau_s > 0.0 && tau_s <= 1.0)) throw Error(Errc::InvalidArgument, "tau_s must lie in (0, 1]");
  if (!(tau_a_db > 0.0)) throw Error(Errc::InvalidArgument, "tau_a_db must be positive");
  if (!(t_gd > 0.0)) throw Error(Errc::InvalidArgument, "t_gd must be positive");
  if (max_peaks < 1) throw Error(Errc::InvalidArgument, "max_peaks must be at least 1");
  if (num_reflections < 2) throw Error(Errc::InvalidArgument, "num_reflections must be at least 2");
  if (!(noise_gate >= 0.0)) throw Error(Errc::InvalidArgument, "noise_gate must be non-negative");
  if (!(median_gate >= 0.0)) throw Error(Errc::InvalidArgument, "median_gate must be non-negative");
  if (!(grubbs_alpha > 0.0 && grubbs_alpha < 1.0)) {
    throw Error(Errc::InvalidArgument, "grubbs_alpha must lie in (0, 1)");
  }
}

std::size_t ToaCluster::num_valid() const noexcept {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

double ToaCluster::mean_toa(int k) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    const double t = toas(static_cast<Eigen::Index>(i), k);
    if (valid[i] && std::isfinite(t)) {
      sum += t;
      ++n;
    }
  }
  if (n == 0) throw Error(Errc::NoValidChannels, "no valid channel for this reflection index");
  return sum / static_cast<double>(n);
}

std::string ToaCluster::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "channel,k,toa_samples,valid\n";
  for (Eigen::Index i = 0; i < toas.rows(); ++i) {
    for (Eigen::Index k = 0; k < toas.cols(); ++k) {
      out << i << ',' << k << ',';
      if (std::isfinite(toas(i, k))) out << toas(i, k);
      out << ',' << (valid[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::vector<double> phase_slope(std::span<const float> rir, double t_gd, double fs) {
  const int taps = window_taps(t_gd, fs);
  if (rir.size() < static_cast<std::size_t>(taps)) {
    throw Error(Errc::TooShort, "signal shorter than the group-delay window");
  }
  const int h = taps / 2;
  std::vector<double> w(static_cast<std::size_t>(taps));
  for (int k = -h; k <= h; ++k) {
    w[static_cast<std::size_t>(k + h)] = 0.5 * (1.0 + std::cos(M_PI * k / (h + 1)));
  }
  const auto n = static_cast<std::ptrdiff_t>(rir.size());
  std::vector<double> e(rir.size());
  double emax = 0.0;
  for (std::size_t i = 0; i < rir.size(); ++i) {
    e[i] = static_cast<double>(rir[i]) * rir[i];
    emax = std::max(emax, e[i]);
  }
  std::vector<double> s(rir.size(), 0.0);
  if (emax == 0.0) return s;
  const double floor = emax * 1e-30;
  for (std::ptrdiff_t m = 0; m < n; ++m) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-h, -m);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(h, n - 1 - m);
    double num = 0.0, den = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double we = w[static_cast<std::size_t>(k + h)] * e[static_cast<std::size_t>(m + k)];
      num += static_cast<double>(k) * we;
      den += we;
    }
    if (den > floor) s[static_cast<std::size_t>(m)] = -num / den;
  }
  return s;
}

std::vector<Onset> onset_candidates(std::span<const float> rir, double t_gd, double fs) {
  const std::vector<double> s = phase_slope(rir, t_gd, fs);
  // Every echo inside the window pulls on the crossing.
  const std::ptrdiff_t radius = std::max(5, window_taps(t_gd, fs) / 2);
  const auto n = static_cast<std::ptrdiff_t>(s.size());
  std::vector<Onset> out;
  for (std::ptrdiff_t m = 0; m + 1 < n; ++m) {
    if (!(s[static_cast<std::size_t>(m)] < 0.0 && s[static_cast<std::size_t>(m + 1)] >= 0.0)) continue;
    const double slope = s[static_cast<std::size_t>(m + 1)] - s[static_cast<std::size_t>(m)];
    const double crossing = static_cast<double>(m) - s[static_cast<std::size_t>(m)] / slope;
    // Echoes closer than the window share one crossing; each becomes an onset.
    for (const std::size_t p : significant_peaks(rir, crossing, radius)) {
      Onset o;
      o.toa = refine_peak(rir, p);
      o.confidence = std::clamp(slope, 0.0, 1.0);
      o.amplitude = std::abs(rir[p]);
      // Neighbouring crossings can resolve to the same peak.
      auto same = std::find_if(out.begin(), out.end(), [&](const Onset& q) { return std::abs(q.toa - o.toa) < 0.5; });
      if (same != out.end()) {
        if (o.confidence > same->confidence) *same = o;
        continue;
      }
      out.push_back(o);
    }
  }
  std::sort(out.begin(), out.end(), [](const Onset& a, const Onset& b) { return a.toa < b.toa; });
  return out;
}

std::vector<Onset> detect_onsets(std::span<const float> rir, const OnsetConfig& cfg, double fs) {
  cfg.validate();
  if (rir.empty()) throw Error(Errc::TooShort, "empty signal");
  float peak = 0.0f;
  for (float v : rir) peak = std::max(peak, std::abs(v));
  std::vector<Onset> out;
  if (peak > 0.0f) {
    double gate = peak * std::pow(10.0, -cfg.tau_a_db / 20.0);
    if (cfg.noise_gate > 0.0) gate = std::max(gate, cfg.noise_gate * noise_sigma(rir));
    for (const Onset& o : onset_candidates(rir, cfg.t_gd, fs)) {
      if (o.confidence >= cfg.tau_s && o.amplitude >= gate) out.push_back(o);
      if (out.size() == static_cast<std::size_t>(cfg.max_peaks)) break;
    }
  }
  if (out.empty()) throw Error(Errc::NoOnsets, "no onset passed the thresholds");
  return out;
}

std::vector<double> dypsa(std::span<const float> rir, const OnsetConfig& cfg, double fs) {
  std::vector<double> toas;
  for (const Onset& o : detect_onsets(rir, cfg, fs)) toas.push_back(o.toa);
  return toas;
}

double grubbs_critical(std::size_t n, double alpha) {
  if (n < 3) return std::numeric_limits<double>::infinity();
  const double dn = static_cast<double>(n);
  const boost::math::students_t dist(dn - 2.0);
  const double t = boost::math::quantile(boost::math::complement(dist, alpha / (2.0 * dn)));
  return (dn - 1.0) / std::sqrt(dn) * std::sqrt(t * t / (dn - 2.0 + t * t));
}

std::vector<std::size_t> grubbs_outliers(const std::vector<double>& values, double alpha) {
  std::vector<std::size_t> alive(values.size());
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<std::size_t> outliers;
  while (alive.size() >= 3) {
    double mean = 0.0;
    for (std::size_t i : alive) mean += values[i];
    mean /= static_cast<double>(alive.size());
    double var = 0.0;
    for (std::size_t i : alive) var += (values[i] - mean) * (values[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(alive.size() - 1));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) break;
    std::size_t worst = 0;
    double g = -1.0;
    for (std::size_t a = 0; a < alive.size(); ++a) {
      const double d = std::abs(values[alive[a]] - mean);
      if (d > g) {
        g = d;
        worst = a;
      }
    }
    if (g / sd <= grubbs_critical(alive.size(), alpha)) break;
    outliers.push_back(alive[worst]);
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  std::sort(outliers.begin(), outliers.end());
  return outliers;
}

namespace {

void fill_medians(ToaCluster& c) {
  const auto K = c.toas.cols();
  c.medians = Eigen::VectorXd::Constant(K, kNaN);
  for (Eigen::Index k = 0; k < K; ++k) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < c.toas.rows(); ++i) {
      if (c.valid[static_cast<std::size_t>(i)] && std::isfinite(c.toas(i, k))) v.push_back(c.toas(i, k));
    }
    c.medians(k) = median_of(std::move(v));
  }
}

ToaCluster from_lists(const std::vector<std::vector<double>>& lists, int K) {
  ToaCluster c;
  const auto M = static_cast<Eigen::Index>(lists.size());
  c.toas = Eigen::MatrixXd::Constant(M, K, kNaN);
  c.valid.assign(lists.size(), false);
  c.snr_db = Eigen::VectorXd::Constant(M, kNaN);
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto& l = lists[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < K && k < static_cast<Eigen::Index>(l.size()); ++k) {
      c.toas(i, k) = l[static_cast<std::size_t>(k)];
    }
    c.valid[static_cast<std::size_t>(i)] = l.size() >= 2;
  }
  return c;
}

}  // namespace

ToaCluster cluster_onsets(const std::vector<std::vector<double>>& per_channel, const OnsetConfig& cfg) {
  cfg.validate();
  if (per_channel.size() < 4) throw Error(Errc::InsufficientChannels, "clustering needs at least 4 channels");
  const int K = cfg.num_reflections;
  std::vector<std::vector<double>> lists = per_channel;
  for (auto& l : lists) std::sort(l.begin(), l.end());

  // False-positive correction: drop an implausible k-th onset while the next
  // one sits closer to the cross-channel median of index k.
  for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
    for (int pass = 0; pass < 4; ++pass) {
      std::vector<double> col;
      for (const auto& l : lists) {
        if (l.size() > k) col.push_back(l[k]);
      }
      if (col.empty()) break;
      const double med = median_of(std::move(col));
      bool changed = false;
      for (auto& l : lists) {
        while (l.size() > k + 1 && std::abs(l[k] - med) > cfg.median_gate &&
               std::abs(l[k + 1] - med) < std::abs(l[k] - med)) {
          l.erase(l.begin() + static_cast<std::ptrdiff_t>(k));
          changed = true;
        }
      }
      if (!changed) break;
    }
  }

  ToaCluster c = from_lists(lists, K);
  for (Eigen::Index k = 0; k < 2; ++k) {
    std::vector<std::size_t> idx;
    std::vector<double> vals;
    for (std::size_t i = 0; i < c.valid.size(); ++i) {
      if (c.valid[i]) {
        idx.push_back(i);
        vals.push_back(c.toas(static_cast<Eigen::Index>(i), k));
      }
    }
    for (std::size_t o : grubbs_outliers(vals, cfg.grubbs_alpha)) c.valid[idx[o]] = false;
  }
  fill_medians(c);
  return c;
}

namespace {

template <typename Cluster>
std::vector<ToaCluster> per_source(const RirSet& set, const OnsetConfig& cfg, Cluster&& cluster) {
  set.validate();
  cfg.validate();
  const std::size_t M = set.num_mics();
  std::vector<ToaCluster> out;
  for (std::size_t j = 0; j < set.num_sources(); ++j) {
    std::vector<std::vector<double>> lists(M);
    for (std::size_t i = 0; i < M; ++i) {
      try {
        lists[i] = dypsa(set.channel(i, j), cfg, set.fs);
      } catch (const Error& e) {
        if (e.code() != Errc::NoOnsets) throw;
      }
    }
    ToaCluster c = cluster(lists);
    for (std::size_t i = 0; i < M; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      c.snr_db(r) = channel_snr_db(set.channel(i, j), c.toas(r, 0), c.toas(r, 1));
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::vector<ToaCluster> cdypsa(const RirSet& set, const OnsetConfig& cfg) {
  if (set.num_mics() < 4) throw Error(Errc::InsufficientChannels, "C-DYPSA needs at least 4 channels");
  return per_source(set, cfg, [&](const std::vector<std::vector<double>>& lists) {
    return cluster_onsets(lists, cfg);
  });
}

std::vector<ToaCluster> dypsa_clusters(const RirSet& set, const OnsetConfig& cfg) {
  return per_source(set, cfg, [&](const std::vector<std::vector<double>>& lists) {
    ToaCluster c = from_lists(lists, cfg.num_reflections);
    fill_medians(c);
    return c;
  });
}

std::vector<ToaCluster> truth_clusters(const RirSet& set) {
  if (!set.truth) throw Error(Errc::MissingGroundTruth, "RirSet carries no ground truth");
  const std::size_t M = set.num_mics();
  const std::size_t L = set.num_sources();
  std::vector<ToaCluster> out;
  for (std::size_t j = 0; j < L; ++j) {
    ToaCluster c;
    c.toas.resize(static_cast<Eigen::Index>(M), 2);
    for (std::size_t i = 0; i < M; ++i) {
      c.toas(static_cast<Eigen::Index>(i), 0) = set.truth->toa_direct[i * L + j];
      c.toas(static_cast<Eigen::Index>(i), 1) = set.truth->toa_reflection[i * L + j];
    }
    c.valid.assign(M, true);
    c.snr_db = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(M), 200.0);
    fill_medians(c);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace echoplane
