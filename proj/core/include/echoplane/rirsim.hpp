#pragma once

// Shoebox image-source simulator and the RirSet container that every
// downstream stage consumes.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "echoplane/geometry.hpp"

namespace echoplane {

inline constexpr double kSpeedOfSound = 343.1;  // m/s
inline constexpr double kDefaultFs = 48000.0;
inline constexpr double kArrayHeight = 0.90;
inline constexpr double kInnerRingRadius = 0.083;
inline constexpr double kOuterRingRadius = 0.104;
inline constexpr double kCompactLimit = 0.171;  // half a 1 kHz wavelength

struct RoomSpec {
  Vec3 dims = Vec3(7.4, 5.7, 2.5);  // Lx, Ly, Lz in meters
  double absorption = 0.2;          // average absorption, applied to all six surfaces
  int max_order = 5;
};

enum class RoomSize { Small, Medium, Large };

struct CatalogRoom {
  std::string name;
  RoomSpec room;
  RoomSize size;
};

/// The ten simulated rooms: three sizes times three absorption values, with two
/// medium rooms at absorption 0.5.
const std::vector<CatalogRoom>& room_catalog();
const CatalogRoom& catalog_room(const std::string& name);

/// Loudspeaker circle radius and minimum loudspeaker-to-wall clearance per size class.
double source_radius(RoomSize size) noexcept;
double wall_clearance(RoomSize size) noexcept;
std::string to_string(RoomSize size);

struct ArrayGeometry {
  std::vector<Point3> mics;
  Point3 center = Point3::Zero();

  /// Two concentric horizontal rings with `per_ring` evenly spaced microphones each.
  static ArrayGeometry bicircular(const Point3& center, int per_ring = 24,
                                  double inner_radius = kInnerRingRadius,
                                  double outer_radius = kOuterRingRadius);

  std::size_t size() const noexcept { return mics.size(); }
  double max_displacement() const;
  bool is_compact() const { return max_displacement() < kCompactLimit; }
};

/// Index of a room boundary: x=0, x=Lx, y=0, y=Ly, z=0 (floor), z=Lz (ceiling).
using WallIndex = int;
Plane wall_plane(const RoomSpec& room, WallIndex wall);

struct SourceTruth {
  WallIndex wall = 0;
  Plane plane{Vec3::UnitZ(), 0.0};
  Point3 image = Point3::Zero();
};

struct GroundTruth {
  /// Wall that most loudspeakers reflect from first (earliest arrival on a tie).
  WallIndex reflector_wall = 0;
  Plane reflector{Vec3::UnitZ(), 0.0};
  /// First reflector of each loudspeaker, measured at the array center.
  std::vector<SourceTruth> per_source;
  /// Positions used for synthesis; differ from RirSet::array after perturbation.
  std::vector<Point3> true_mics;
  /// Unquantized TOAs in samples, mic-major (index i * L + j).
  std::vector<double> toa_direct;
  std::vector<double> toa_reflection;
};

struct SimulationInfo {
  RoomSpec room;
  double mic_perturbation = 0.0;  // max displacement in meters
  double dnr_db = std::numeric_limits<double>::infinity();
  std::uint64_t perturbation_seed = 0;
  std::uint64_t noise_seed = 0;
};

/// Multichannel RIRs in mic-major order: channel (i, j) is mic i, loudspeaker j.
struct RirSet {
  double fs = kDefaultFs;
  double c0 = kSpeedOfSound;
  ArrayGeometry array;
  std::vector<Point3> sources;
  std::vector<std::vector<float>> channels;
  std::optional<GroundTruth> truth;
  std::optional<SimulationInfo> sim;

  std::size_t num_mics() const noexcept { return array.size(); }
  std::size_t num_sources() const noexcept { return sources.size(); }
  std::size_t channel_index(std::size_t mic, std::size_t source) const noexcept {
    return mic * num_sources() + source;
  }
  const std::vector<float>& channel(std::size_t mic, std::size_t source) const {
    return channels.at(channel_index(mic, source));
  }
  std::size_t length() const noexcept { return channels.empty() ? 0 : channels.front().size(); }

  /// Throws InvalidArgument if the channel layout or sampling metadata is inconsistent.
  void validate() const;
};

struct SimOptions {
  double c0 = kSpeedOfSound;
  int kernel_taps = 81;        // windowed-sinc fractional-delay kernel
  double highpass_hz = 50.0;   // 4th-order Butterworth; <= 0 disables
  /// Positions used for synthesis when they differ from the reported geometry.
  std::optional<std::vector<Point3>> true_mics;
};

/// Renders every (mic, loudspeaker) RIR with images up to room.max_order.
RirSet simulate(const RoomSpec& room, const ArrayGeometry& array,
                const std::vector<Point3>& sources, double fs, const SimOptions& opts = {});

/// Moves every microphone by a uniformly random direction and an amplitude
/// uniform in [0, max_displacement], re-synthesizes at the true positions and
/// keeps the unperturbed geometry as metadata. Requires set.sim.
RirSet perturb_mics(const RirSet& set, double max_displacement, std::uint64_t seed);

/// Adds white Gaussian noise with power peak^2 * 10^(-dnr/10) per channel,
/// where peak is the largest absolute sample of the channel. Infinite DNR is a no-op.
RirSet add_noise(const RirSet& set, double dnr_db, std::uint64_t seed);

struct Setup {
  ArrayGeometry array;
  std::vector<Point3> sources;
};

/// Random bi-circular array position plus `num_sources` loudspeakers on a
/// horizontal circle of `radius`, at least 5 degrees apart and `clearance`
/// meters from every wall. Throws InfeasibleSetup after 1000 failed attempts.
Setup random_setup(const RoomSpec& room, std::size_t num_sources, double radius,
                   double clearance, std::uint64_t seed);

/// Per-channel TOA (samples) of the geometric first reflection for each source,
/// and the matching direct path; used by the simulator and by tests.
GroundTruth compute_ground_truth(const RoomSpec& room, const ArrayGeometry& array,
                                 const std::vector<Point3>& true_mics,
                                 const std::vector<Point3>& sources, double fs, double c0);

}  // namespace echoplane
