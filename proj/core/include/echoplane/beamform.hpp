#pragma once

// Reflection-segment extraction and delay-and-sum DOA estimation.

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "echoplane/onset.hpp"
#include "echoplane/rirsim.hpp"

namespace echoplane {

struct Doa {
  double azimuth = 0.0;    // (-pi, pi]
  double elevation = 0.0;  // [-pi/2, pi/2]

  static Doa from_direction(const Vec3& u);
  Vec3 direction() const;
};

/// Windowed multichannel excerpt around the k-th reflection of one loudspeaker.
struct Segment {
  std::vector<std::size_t> mics;  // valid microphone indices, one column each
  Eigen::MatrixXd data;           // taps x mics.size()
  double center = 0.0;            // mean k-th TOA over valid channels (samples)
  long start = 0;                 // sample index of row 0
};

/// Window length in samples: round(T * fs) forced odd.
int segment_taps(double seconds, double fs);

/// Hamming-windowed excerpt centered on round(mean TOA); invalid channels
/// are left out.
Segment segment(const RirSet& set, const ToaCluster& cluster, std::size_t source, int k,
                double window_seconds = 2.7e-3);

/// Which side of a planar array reflections are assumed to come from. A
/// planar array cannot tell the two apart.
enum class HemispherePrior { None, Below, Above };

struct DsbConfig {
  double grid_deg = 1.0;
  int upsample = 16;
  HemispherePrior prior = HemispherePrior::Below;
  /// Steer spherical wavefronts focused at the segment's mean TOA range
  /// instead of plane waves.
  bool near_field = false;
};

enum class ArrayShape { Volumetric, Planar, Collinear };
ArrayShape array_shape(const std::vector<Point3>& mics);

/// Best-fit plane of a planar array with its normal pointing up (+z, or the
/// first nonzero axis); nullopt for volumetric or collinear arrays.
std::optional<Plane> array_plane(const std::vector<Point3>& mics);

/// Mirrors p across the array plane when it lies on the side the prior rules
/// out. Identity for non-planar arrays or HemispherePrior::None.
Point3 fold_to_prior(const Point3& p, const std::vector<Point3>& mics, HemispherePrior prior);

/// Steered response power (cross terms only) toward direction u. A positive
/// range (samples) focuses at that distance from the array center.
class SteeredPower {
 public:
  SteeredPower(const Segment& seg, const ArrayGeometry& array, double c0, double fs, int upsample = 16,
               double range_samples = 0.0);
  double operator()(const Vec3& u) const;

 private:
  std::vector<Vec3> pos_;     // mic offsets scaled to samples per unit direction
  std::vector<double> table_; // pair-major cross-correlation on a 1/upsample lag grid
  int upsample_ = 16;
  int max_lag_ = 0;           // integer lag extent of the table
  std::size_t row_ = 0;
  double range_ = 0.0;
};

/// Grid search over azimuth x elevation with quadratic peak refinement.
/// Throws DegenerateArray for collinear microphones and InsufficientChannels
/// when fewer than 4 channels remain.
Doa dsb_doa(const Segment& seg, const ArrayGeometry& array, double c0, double fs,
            const DsbConfig& cfg = {});

/// Refined local maxima of the steered-power grid reaching `min_ratio` of
/// the global maximum, strongest first. The first entry equals dsb_doa.
std::vector<Doa> dsb_doa_candidates(const Segment& seg, const ArrayGeometry& array, double c0, double fs,
                                    const DsbConfig& cfg, double min_ratio);

}  // namespace echoplane
