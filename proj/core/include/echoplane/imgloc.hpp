#pragma once

// Image-source locators: maximum likelihood over sampled points,
// random-subset multilateration, and ISDAR (mean TOA plus DSB direction).

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "echoplane/beamform.hpp"
#include "echoplane/onset.hpp"

namespace echoplane {

enum class ImageMethod { ML, Multilateration, ISDAR, MirroredETSAC };
std::string to_string(ImageMethod m);

struct ImageEstimate {
  Point3 position = Point3::Zero();
  ImageMethod method = ImageMethod::ISDAR;
  std::size_t source = 0;
};

struct MlConfig {
  int num_points = 10000;
  /// Constant TOA deviation in samples; unset means the SNR-driven model.
  std::optional<double> sigma_samples;
  /// Effective bandwidth for the SNR model; <= 0 means fs / 2.
  double bandwidth_hz = 0.0;
  bool refine = true;  // local direct search from the best sample
  int refine_evaluations = 200;
  HemispherePrior prior = HemispherePrior::Below;
};

/// Per-channel TOA deviation (samples) of the SNR model, floored at one sample.
double ml_sigma(double snr_db, double fs, double bandwidth_hz);

/// Index of the candidate minimizing the weighted squared TOA residual
/// (maximum Gaussian likelihood); ties go to the lowest index.
std::size_t ml_select(const std::vector<Point3>& candidates, const std::vector<Point3>& mics,
                      const std::vector<double>& toas, const std::vector<double>& sigmas,
                      double c0, double fs);

ImageEstimate ml_locate(const ToaCluster& cluster, const ArrayGeometry& array, double c0, double fs,
                        const MlConfig& cfg, std::uint64_t seed, std::size_t source = 0);

/// Both intersection points of three spheres, or nullopt when they do not
/// meet or the centers are collinear.
std::optional<std::pair<Point3, Point3>> trilaterate(const Point3& p1, double r1, const Point3& p2,
                                                     double r2, const Point3& p3, double r3);

struct MultilatResult {
  ImageEstimate estimate;
  int survivors = 0;  // combinations that produced an intersection
};

MultilatResult multilaterate(const ToaCluster& cluster, const ArrayGeometry& array, double c0,
                             double fs, int combos, std::uint64_t seed, std::size_t source = 0,
                             HemispherePrior prior = HemispherePrior::Below);

/// center + rho * direction(doa), rho = mean reflection TOA * c0 / fs.
ImageEstimate isdar(const ToaCluster& cluster, const Doa& doa, const ArrayGeometry& array, double c0,
                    double fs, std::size_t source = 0);
ImageEstimate isdar(double rho, const Doa& doa, const Point3& center, std::size_t source = 0);

/// RMS mismatch (samples) between the valid reflection TOAs of index k and
/// the mic distances to the point center + rho_k * direction(doa), after
/// removing the mean offset.
double toa_pattern_residual(const ToaCluster& cluster, int k, const Doa& doa, const ArrayGeometry& array,
                            double c0, double fs);

/// Mean reflection range minus the second-order wavefront curvature term
/// mean(|d_i|^2 - (u.d_i)^2) / (2 rho), d_i the valid mic offsets from the
/// array center and u the DOA. Turns the mean mic range into a center range.
double curvature_corrected_range(const ToaCluster& cluster, const Doa& doa, const ArrayGeometry& array,
                                 double c0, double fs);

}  // namespace echoplane
