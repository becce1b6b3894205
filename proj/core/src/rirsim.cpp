#include "echoplane/rirsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "echoplane/error.hpp"
#include "echoplane/random.hpp"

namespace echoplane {

namespace {

constexpr double kPi = std::numbers::pi;

bool strictly_inside(const RoomSpec& room, const Point3& p) {
  for (int d = 0; d < 3; ++d) {
    if (!(p[d] > 0.0 && p[d] < room.dims[d])) return false;
  }
  return true;
}

void check_room(const RoomSpec& room) {
  if (!(room.dims.minCoeff() > 0.0) || !room.dims.allFinite()) {
    throw Error(Errc::InvalidArgument, "room dimensions must be positive");
  }
  if (!(room.absorption > 0.0 && room.absorption <= 1.0)) {
    throw Error(Errc::InvalidArgument, "absorption must lie in (0, 1]");
  }
  if (room.max_order < 0) {
    throw Error(Errc::InvalidArgument, "max_order must be non-negative");
  }
}

// 2nd-order section, direct form II transposed.
struct Biquad {
  double b0, b1, b2, a1, a2;
  void run(std::vector<double>& x) const {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double y = b0 * v + z1;
      z1 = b1 * v - a1 * y + z2;
      z2 = b2 * v - a2 * y;
      v = y;
    }
  }
};

Biquad highpass_section(double fc, double fs, double q) {
  const double w0 = 2.0 * kPi * fc / fs;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  return {(1.0 + cw) / 2.0 / a0, -(1.0 + cw) / a0, (1.0 + cw) / 2.0 / a0, -2.0 * cw / a0,
          (1.0 - alpha) / a0};
}

// Butterworth pole pairs for a 4th-order response.
void highpass4(std::vector<double>& x, double fc, double fs) {
  highpass_section(fc, fs, 1.0 / (2.0 * std::cos(kPi / 8.0))).run(x);
  highpass_section(fc, fs, 1.0 / (2.0 * std::cos(3.0 * kPi / 8.0))).run(x);
}

void add_fractional_impulse(std::vector<double>& out, double delay, double amplitude, int taps) {
  const int half = taps / 2;
  const auto base = static_cast<long>(std::floor(delay));
  for (long n = base - half; n <= base + half + 1; ++n) {
    if (n < 0 || n >= static_cast<long>(out.size())) continue;
    const double t = static_cast<double>(n) - delay;
    if (std::abs(t) > half + 1) continue;
    const double window = 0.5 * (1.0 + std::cos(kPi * t / (half + 1)));
    const double sinc = t == 0.0 ? 1.0 : std::sin(kPi * t) / (kPi * t);
    out[static_cast<std::size_t>(n)] += amplitude * window * sinc;
  }
}

struct ImageSource {
  Point3 position;
  int order;
};

std::vector<ImageSource> enumerate_images(const RoomSpec& room, const Point3& src) {
  std::vector<ImageSource> images;
  const int N = room.max_order;
  for (int mx = -N; mx <= N; ++mx)
    for (int my = -N; my <= N; ++my)
      for (int mz = -N; mz <= N; ++mz)
        for (int q = 0; q < 8; ++q) {
          const std::array<int, 3> m{mx, my, mz};
          int order = 0;
          Point3 pos;
          for (int d = 0; d < 3; ++d) {
            const int qd = (q >> d) & 1;
            order += std::abs(m[d] - qd) + std::abs(m[d]);
            pos[d] = (1 - 2 * qd) * src[d] + 2.0 * m[d] * room.dims[d];
          }
          if (order <= N) images.push_back({pos, order});
        }
  return images;
}

}  // namespace

const std::vector<CatalogRoom>& room_catalog() {
  static const std::vector<CatalogRoom> catalog = {
      {"S-0.2", {Vec3(6.0, 4.3, 2.3), 0.2, 5}, RoomSize::Small},
      {"M-0.2", {Vec3(7.4, 5.7, 2.5), 0.2, 5}, RoomSize::Medium},
      {"L-0.2", {Vec3(19.7, 24.3, 6.0), 0.2, 5}, RoomSize::Large},
      {"S-0.5", {Vec3(2.4, 4.0, 2.4), 0.5, 5}, RoomSize::Small},
      {"M-0.5a", {Vec3(7.4, 5.7, 2.5), 0.5, 5}, RoomSize::Medium},
      {"M-0.5b", {Vec3(7.8, 6.1, 4.0), 0.5, 5}, RoomSize::Medium},
      {"L-0.5", {Vec3(14.6, 17.1, 6.5), 0.5, 5}, RoomSize::Large},
      {"S-0.8", {Vec3(4.1, 5.0, 2.1), 0.8, 5}, RoomSize::Small},
      {"M-0.8", {Vec3(7.4, 5.7, 2.5), 0.8, 5}, RoomSize::Medium},
      {"L-0.8", {Vec3(6.6, 8.8, 4.0), 0.8, 5}, RoomSize::Large},
  };
  return catalog;
}

const CatalogRoom& catalog_room(const std::string& name) {
  for (const auto& r : room_catalog()) {
    if (r.name == name) return r;
  }
  throw Error(Errc::InvalidArgument, "unknown room '" + name + "'");
}

double source_radius(RoomSize size) noexcept { return size == RoomSize::Small ? 1.00 : 1.68; }
double wall_clearance(RoomSize size) noexcept { return size == RoomSize::Small ? 0.22 : 0.36; }

std::string to_string(RoomSize size) {
  switch (size) {
    case RoomSize::Small: return "S";
    case RoomSize::Medium: return "M";
    case RoomSize::Large: return "L";
  }
  return "?";
}

ArrayGeometry ArrayGeometry::bicircular(const Point3& center, int per_ring, double inner_radius,
                                        double outer_radius) {
  ArrayGeometry g;
  g.center = center;
  for (double radius : {inner_radius, outer_radius}) {
    for (int k = 0; k < per_ring; ++k) {
      const double phi = 2.0 * kPi * k / per_ring;
      g.mics.push_back(center + radius * Vec3(std::cos(phi), std::sin(phi), 0.0));
    }
  }
  return g;
}

double ArrayGeometry::max_displacement() const {
  double m = 0.0;
  for (const auto& p : mics) m = std::max(m, (p - center).norm());
  return m;
}

Plane wall_plane(const RoomSpec& room, WallIndex wall) {
  const int axis = wall / 2;
  const bool far_side = wall % 2 == 1;
  Vec3 n = Vec3::Zero();
  n[axis] = far_side ? -1.0 : 1.0;
  return Plane(n, far_side ? room.dims[axis] : 0.0);
}

void RirSet::validate() const {
  if (!(fs > 0.0) || !(c0 > 0.0)) throw Error(Errc::InvalidArgument, "fs and c0 must be positive");
  if (channels.size() != num_mics() * num_sources()) {
    throw Error(Errc::ShapeMismatch, "channel count differs from mics x sources");
  }
  for (const auto& ch : channels) {
    if (ch.size() != length()) throw Error(Errc::ShapeMismatch, "channels differ in length");
  }
}

GroundTruth compute_ground_truth(const RoomSpec& room, const ArrayGeometry& array,
                                 const std::vector<Point3>& true_mics,
                                 const std::vector<Point3>& sources, double fs, double c0) {
  GroundTruth gt;
  gt.true_mics = true_mics;
  std::array<int, 6> votes{};
  std::array<double, 6> earliest;
  earliest.fill(std::numeric_limits<double>::infinity());
  for (const auto& src : sources) {
    SourceTruth st;
    double best = std::numeric_limits<double>::infinity();
    for (WallIndex w = 0; w < 6; ++w) {
      const Plane p = wall_plane(room, w);
      const Point3 image = reflect_point(src, p);
      const double path = (image - array.center).norm();
      if (path < best) {
        best = path;
        st = {w, p, image};
      }
    }
    ++votes[static_cast<std::size_t>(st.wall)];
    earliest[static_cast<std::size_t>(st.wall)] = std::min(earliest[static_cast<std::size_t>(st.wall)], best);
    gt.per_source.push_back(st);
  }
  // The wall most loudspeakers reflect from first; earliest arrival breaks ties.
  for (WallIndex w = 1; w < 6; ++w) {
    const auto a = static_cast<std::size_t>(w), b = static_cast<std::size_t>(gt.reflector_wall);
    if (votes[a] > votes[b] || (votes[a] == votes[b] && earliest[a] < earliest[b])) gt.reflector_wall = w;
  }
  gt.reflector = wall_plane(room, gt.reflector_wall);
  const std::size_t L = sources.size();
  gt.toa_direct.resize(true_mics.size() * L);
  gt.toa_reflection.resize(true_mics.size() * L);
  for (std::size_t i = 0; i < true_mics.size(); ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      gt.toa_direct[i * L + j] = (true_mics[i] - sources[j]).norm() * fs / c0;
      gt.toa_reflection[i * L + j] = (true_mics[i] - gt.per_source[j].image).norm() * fs / c0;
    }
  }
  return gt;
}

RirSet simulate(const RoomSpec& room, const ArrayGeometry& array,
                const std::vector<Point3>& sources, double fs, const SimOptions& opts) {
  check_room(room);
  if (!(fs > 0.0) || !(opts.c0 > 0.0)) throw Error(Errc::InvalidArgument, "fs and c0 must be positive");
  const std::vector<Point3>& true_mics = opts.true_mics ? *opts.true_mics : array.mics;
  if (true_mics.size() != array.size()) {
    throw Error(Errc::ShapeMismatch, "true microphone list differs from array size");
  }
  for (const auto& s : sources) {
    if (!strictly_inside(room, s)) throw Error(Errc::SourceOutsideRoom, "loudspeaker outside room");
  }
  for (const auto& m : true_mics) {
    if (!strictly_inside(room, m)) throw Error(Errc::MicOutsideRoom, "microphone outside room");
  }

  const double beta = std::sqrt(1.0 - room.absorption);
  std::vector<std::vector<ImageSource>> images;
  double max_path = 0.0;
  for (const auto& s : sources) {
    images.push_back(enumerate_images(room, s));
    for (const auto& im : images.back()) {
      for (const auto& m : true_mics) max_path = std::max(max_path, (im.position - m).norm());
    }
  }
  const int half = opts.kernel_taps / 2;
  const auto length = static_cast<std::size_t>(std::ceil(max_path * fs / opts.c0)) + half + 256;

  RirSet set;
  set.fs = fs;
  set.c0 = opts.c0;
  set.array = array;
  set.sources = sources;
  set.channels.resize(array.size() * sources.size());
  std::vector<double> buf(length);
  for (std::size_t i = 0; i < true_mics.size(); ++i) {
    for (std::size_t j = 0; j < sources.size(); ++j) {
      std::fill(buf.begin(), buf.end(), 0.0);
      for (const auto& im : images[j]) {
        const double dist = (im.position - true_mics[i]).norm();
        const double amp = std::pow(beta, im.order) / (4.0 * kPi * dist);
        add_fractional_impulse(buf, dist * fs / opts.c0, amp, opts.kernel_taps);
      }
      if (opts.highpass_hz > 0.0) highpass4(buf, opts.highpass_hz, fs);
      auto& ch = set.channels[set.channel_index(i, j)];
      ch.resize(length);
      std::transform(buf.begin(), buf.end(), ch.begin(),
                     [](double v) { return static_cast<float>(v); });
    }
  }
  set.truth = compute_ground_truth(room, array, true_mics, sources, fs, opts.c0);
  SimulationInfo info;
  info.room = room;
  set.sim = info;
  return set;
}

RirSet perturb_mics(const RirSet& set, double max_displacement, std::uint64_t seed) {
  if (!(max_displacement >= 0.0)) throw Error(Errc::InvalidArgument, "displacement must be >= 0");
  if (!set.sim) throw Error(Errc::MissingGroundTruth, "perturb_mics needs simulation metadata");
  if (max_displacement == 0.0) {
    RirSet out = set;
    out.sim->perturbation_seed = seed;
    return out;
  }
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Point3> true_mics;
  for (const auto& m : set.array.mics) {
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    dir.normalize();
    true_mics.push_back(m + uni(rng) * max_displacement * dir);
  }
  SimOptions opts;
  opts.c0 = set.c0;
  opts.true_mics = true_mics;
  RirSet out = simulate(set.sim->room, set.array, set.sources, set.fs, opts);
  out.sim = set.sim;
  out.sim->mic_perturbation = max_displacement;
  out.sim->perturbation_seed = seed;
  if (std::isfinite(set.sim->dnr_db)) {
    out = add_noise(out, set.sim->dnr_db, set.sim->noise_seed);
  }
  return out;
}

RirSet add_noise(const RirSet& set, double dnr_db, std::uint64_t seed) {
  RirSet out = set;
  if (std::isinf(dnr_db) && dnr_db > 0) return out;
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& ch : out.channels) {
    double peak = 0.0;
    for (float v : ch) peak = std::max(peak, std::abs(static_cast<double>(v)));
    if (peak == 0.0) throw Error(Errc::InvalidArgument, "channel without direct-sound peak");
    const double sigma = peak * std::pow(10.0, -dnr_db / 20.0);
    for (float& v : ch) v = static_cast<float>(v + sigma * gauss(rng));
  }
  if (!out.sim) out.sim = SimulationInfo{};
  out.sim->dnr_db = dnr_db;
  out.sim->noise_seed = seed;
  return out;
}

Setup random_setup(const RoomSpec& room, std::size_t num_sources, double radius, double clearance,
                   std::uint64_t seed) {
  check_room(room);
  if (num_sources == 0) throw Error(Errc::InvalidArgument, "need at least one loudspeaker");
  constexpr double kMinGap = 5.0 * kPi / 180.0;
  Rng rng(seed);
  std::uniform_real_distribution<double> ux(0.0, room.dims.x());
  std::uniform_real_distribution<double> uy(0.0, room.dims.y());
  std::uniform_real_distribution<double> uaz(0.0, 2.0 * kPi);

  auto clear_of_walls = [&](const Point3& p, double margin) {
    for (int d = 0; d < 3; ++d) {
      if (p[d] < margin || p[d] > room.dims[d] - margin) return false;
    }
    return true;
  };

  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Point3 center(ux(rng), uy(rng), kArrayHeight);
    std::vector<double> az(num_sources);
    for (auto& a : az) a = uaz(rng);

    std::vector<double> sorted = az;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t k = 0; k + 1 < sorted.size() && ok; ++k) ok = sorted[k + 1] - sorted[k] >= kMinGap;
    if (ok && sorted.size() > 1) ok = sorted.front() + 2.0 * kPi - sorted.back() >= kMinGap;
    if (!ok) continue;

    Setup setup;
    setup.array = ArrayGeometry::bicircular(center);
    for (const auto& m : setup.array.mics) ok = ok && clear_of_walls(m, 1e-3);
    for (double a : az) {
      const Point3 s = center + radius * Vec3(std::cos(a), std::sin(a), 0.0);
      ok = ok && clear_of_walls(s, clearance);
      setup.sources.push_back(s);
    }
    if (ok) return setup;
  }
  throw Error(Errc::InfeasibleSetup, "no admissible array/loudspeaker layout in 1000 attempts");
}

}  // namespace echoplane
