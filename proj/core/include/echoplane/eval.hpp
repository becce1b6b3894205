#pragma once

// Metric suite: fine/gross split, TOA and image errors, plane RMSE,
// leave-one-loudspeaker-out and confidence intervals.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "echoplane/geometry.hpp"

namespace echoplane {

inline constexpr double kGrossToaMm = 104.0;
inline constexpr double kGrossPlaneMm = 500.0;
inline constexpr double kGrossImageMm = 500.0;

/// Values at or above the threshold (and NaN failures) are gross; the mean
/// covers the rest and is unset when nothing is fine.
struct FineGross {
  std::optional<double> mean;
  double gross_pct = 0.0;
  std::size_t fine = 0;
  std::size_t total = 0;
};
FineGross split_fine_gross(const std::vector<double>& values, double threshold);

struct ToaError {
  std::optional<double> rmse_mm;
  double gross_pct = 0.0;
  std::size_t fine = 0;
  std::size_t total = 0;
};

/// RMSE over TOA distances (samples * c0 / fs) in mm. NaN estimates count
/// as gross.
ToaError rmse_toa(const std::vector<double>& estimated, const std::vector<double>& truth, double c0,
                  double fs, double gross_mm = kGrossToaMm);

/// Euclidean image errors in mm; missing estimates count as gross.
FineGross image_error(const std::vector<std::optional<Point3>>& estimates, const std::vector<Point3>& truths,
                      double gross_mm = kGrossImageMm);

/// Points sampled on every source-to-mic segment (endpoints included) are
/// projected onto both planes; RMSE of the paired projection distances in mm.
double plane_rmse(const Plane& estimate, const Plane& truth, const std::vector<Point3>& mics,
                  const std::vector<Point3>& sources, int points_per_segment = 5);

/// zeta / D * sqrt(sum (mu_d - mean)^2).
double confidence_interval(const std::vector<double>& per_dataset, double zeta = 1.96);

struct LoloResult {
  std::vector<double> rmse_mm;  // one per left-out loudspeaker, NaN on failure
  FineGross summary;
};

/// Runs `method` on each of the L subsets that leave one loudspeaker out.
/// A method returning nullopt or throwing counts as gross.
LoloResult lolo(std::size_t num_sources,
                const std::function<std::optional<Plane>(const std::vector<std::size_t>& used)>& method,
                const Plane& truth, const std::vector<Point3>& mics, const std::vector<Point3>& sources);

struct SetupMetrics {
  std::string id;
  std::optional<double> rmse_toa;  // mm
  std::optional<double> g_toa;     // percent
  std::optional<double> mu_eps;
  std::optional<double> g_eps;
  std::optional<double> mu_rmse;
  std::optional<double> g_rmse;
  std::optional<double> seconds;
  // raw samples for pooled aggregation
  std::vector<double> toa_errors_mm;
  std::vector<double> plane_errors_mm;
  std::vector<double> image_errors_mm;
};

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> gross_pct;
  std::optional<double> ci;
};

struct EvalReport {
  std::string method;
  std::string label;  // dataset key, e.g. "M" or "dnr=30"
  MetricSummary toa;
  MetricSummary eps;
  MetricSummary rmse;
  std::optional<double> mean_seconds;
  std::vector<SetupMetrics> setups;
};

/// Pools per-setup samples into fine means and gross rates; CIs are taken
/// over the per-setup fine means.
EvalReport aggregate(std::string method, std::string label, std::vector<SetupMetrics> setups);

std::string to_json(const EvalReport& report);
std::string to_csv(const std::vector<EvalReport>& reports);
/// Rows are methods, columns are dataset labels; "mu (G%)" per cell, "--" when undefined.
std::string markdown_table(const std::vector<EvalReport>& reports);

}  // namespace echoplane
