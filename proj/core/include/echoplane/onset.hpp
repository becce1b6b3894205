#pragma once

// TOA extraction: single-channel phase-slope epoch detection (DYPSA style)
// and the multichannel clustering variant (C-DYPSA).

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "echoplane/rirsim.hpp"

namespace echoplane {

struct OnsetConfig {
  double tau_s = 0.2;       // slope confidence threshold, (0, 1]
  double tau_a_db = 25.0;   // amplitude gate below the global peak
  double t_gd = 3.5e-3;     // group-delay window length in seconds
  int max_peaks = 8;
  int num_reflections = 3;  // K tracked by the clustering step
  double grubbs_alpha = 0.05;
  /// Cross-channel correction only touches onsets further than this from the
  /// median (samples). Genuine spread is bounded by the array diameter, 208 mm
  /// or 29.1 samples at 48 kHz. 0 always corrects.
  double median_gate = 29.1;
  /// Onsets must also exceed this many robust noise deviations; 0 disables.
  double noise_gate = 4.5;

  void validate() const;
};

/// One loudspeaker's TOAs across the array. toas(i, k) is NaN when channel i
/// has no k-th onset; valid(i) is false for channels rejected by clustering.
struct ToaCluster {
  Eigen::MatrixXd toas;          // M x K, fractional samples
  std::vector<bool> valid;       // M
  Eigen::VectorXd medians;       // K
  Eigen::VectorXd snr_db;        // M, reflection peak over noise floor

  std::size_t num_channels() const noexcept { return valid.size(); }
  std::size_t num_valid() const noexcept;
  /// Mean k-th TOA over valid channels.
  double mean_toa(int k) const;

  /// "channel,k,toa_samples,valid" rows.
  std::string to_csv() const;
};

struct Onset {
  double toa = 0.0;         // refined sample position
  double confidence = 0.0;  // slope confidence in [0, 1]
  double amplitude = 0.0;   // local |x| peak
};

/// Negated energy-weighted group delay of a Hann-weighted frame centered on
/// each sample. Zero-energy frames yield 0.
std::vector<double> phase_slope(std::span<const float> rir, double t_gd, double fs);

/// Positive-going zero crossings of the phase slope with their confidences
/// and amplitudes, before thresholding.
std::vector<Onset> onset_candidates(std::span<const float> rir, double t_gd, double fs);

/// Thresholded onsets sorted by time, capped at cfg.max_peaks.
std::vector<Onset> detect_onsets(std::span<const float> rir, const OnsetConfig& cfg, double fs);
std::vector<double> dypsa(std::span<const float> rir, const OnsetConfig& cfg, double fs);

/// Clustering step alone: median correction and iterative Grubbs rejection
/// on per-channel onset lists.
ToaCluster cluster_onsets(const std::vector<std::vector<double>>& per_channel,
                          const OnsetConfig& cfg);

/// Per-loudspeaker clusters of a RirSet (index j).
std::vector<ToaCluster> cdypsa(const RirSet& set, const OnsetConfig& cfg);

/// Per-loudspeaker clusters built from plain DYPSA with no cross-channel
/// correction: channel i keeps its first K onsets and is valid when it has two.
std::vector<ToaCluster> dypsa_clusters(const RirSet& set, const OnsetConfig& cfg);

/// Clusters holding the simulator's ground-truth TOAs (all channels valid).
std::vector<ToaCluster> truth_clusters(const RirSet& set);

/// Two-sided Grubbs critical value for n samples at significance alpha.
double grubbs_critical(std::size_t n, double alpha);

/// Indices of outliers found by the iterative two-sided Grubbs test.
std::vector<std::size_t> grubbs_outliers(const std::vector<double>& values, double alpha);

}  // namespace echoplane
