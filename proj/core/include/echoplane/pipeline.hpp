#pragma once

// End-to-end method runner shared by the command-line tool, the benchmarks
// and the acceptance suite.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "echoplane/beamform.hpp"
#include "echoplane/eval.hpp"
#include "echoplane/imgloc.hpp"
#include "echoplane/onset.hpp"
#include "echoplane/reflector.hpp"
#include "echoplane/rirsim.hpp"

namespace echoplane {

enum class Method { MlLib, MultilatLib, IsdarLib, MeanIsdarLib, MedianIsdarLib, Etsac, MirroredEtsac };

std::string to_string(Method m);
std::optional<Method> parse_method(std::string_view name);
const std::vector<Method>& all_methods();
/// Methods combining several loudspeakers, evaluated leave-one-out.
bool is_multi_source(Method m);
bool needs_doa(Method m);

struct PipelineConfig {
  OnsetConfig onset;
  DsbConfig dsb;
  MlConfig ml;
  EtsacConfig etsac;
  int multilat_combos = 100;
  double segment_seconds = 2.7e-3;
  /// ISDAR range from the array center rather than the mean mic range.
  bool isdar_curvature = true;
  /// Among steered-power peaks within half the maximum, keep the one whose
  /// delay pattern agrees best with the clustered reflection TOAs.
  bool doa_toa_check = true;
  HemispherePrior prior = HemispherePrior::Below;
  /// Use the simulator's TOAs instead of running C-DYPSA.
  bool inject_truth_toas = false;
  /// Plain per-channel DYPSA instead of C-DYPSA.
  bool plain_dypsa = false;
  std::uint64_t seed = 0;

  /// Drops the refinements that go beyond the published procedure.
  static PipelineConfig paper_faithful();
  void apply_prior();
};

struct Preprocessed {
  std::vector<ToaCluster> clusters;      // one per loudspeaker
  std::vector<std::optional<Doa>> doas;  // reflection DOA per loudspeaker, if requested
  double onset_seconds = 0.0;
  double doa_seconds = 0.0;
};

Preprocessed preprocess(const RirSet& set, const PipelineConfig& cfg, bool with_doa);

struct PlaneResult {
  std::vector<std::size_t> used;  // loudspeakers fed to the estimator
  std::optional<ReflectorEstimate> estimate;
  std::string error;              // failure reason when estimate is unset
};

struct MethodRun {
  Method method = Method::IsdarLib;
  /// Single-source methods: one entry per loudspeaker. Multi-source methods:
  /// entry u leaves loudspeaker u out.
  std::vector<PlaneResult> planes;
  /// Image per loudspeaker where the method produces one.
  std::vector<std::optional<Point3>> images;
  /// Locator stage only; shared preprocessing is reported separately.
  double seconds = 0.0;
};

MethodRun run_method(Method method, const RirSet& set, const Preprocessed& pre, const PipelineConfig& cfg);

/// Metrics of one setup against the RirSet's ground truth.
SetupMetrics evaluate_run(const MethodRun& run, const RirSet& set, const Preprocessed& pre, std::string id);

/// TOA errors (mm) of the direct sound and first reflection on valid channels.
std::vector<double> toa_errors_mm(const std::vector<ToaCluster>& clusters, const RirSet& set);

}  // namespace echoplane
