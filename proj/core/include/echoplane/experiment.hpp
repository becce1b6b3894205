#pragma once

// Simulated dataset protocol: catalog rooms, noise regimes, seeded setup
// generation and a small worker pool for setup-level parallelism.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "echoplane/rirsim.hpp"

namespace echoplane {

inline constexpr std::size_t kNumSources = 8;

/// Regime 1: strong mic-position error at high DNR. Regime 2: small
/// position error with the DNR swept.
struct NoiseSpec {
  int regime = 1;
  double perturbation_m = 0.007;
  double dnr_db = 70.0;

  static NoiseSpec regime1();
  static NoiseSpec regime2(double dnr_db);
  /// No perturbation, no noise.
  static NoiseSpec noiseless();
  /// "regime1", "dnr30", "noiseless".
  std::string label() const;
};

struct SetupSeeds {
  std::uint64_t setup = 0;
  std::uint64_t perturbation = 0;
  std::uint64_t noise = 0;
};

/// Streams of setup `setup_index` in catalog room `room_index`.
SetupSeeds setup_seeds(std::uint64_t root, std::size_t room_index, std::size_t setup_index);

std::size_t catalog_index(const std::string& name);

/// Random array/loudspeaker layout in the room, simulated, then perturbed
/// and noised per `noise`.
RirSet generate_setup(std::size_t room_index, const SetupSeeds& seeds, const NoiseSpec& noise,
                      std::size_t num_sources = kNumSources, double fs = kDefaultFs);

/// Declarative description of a simulated sweep.
struct ExperimentSpec {
  std::vector<std::string> rooms;  // catalog names
  std::size_t setups_per_room = 10;
  int regime = 1;
  std::vector<double> dnr_db;      // regime 2 only
  std::vector<std::string> methods;
  std::uint64_t seed = 1;
  std::string out;

  /// Throws InvalidArgument naming the first problem.
  void validate() const;
  std::vector<NoiseSpec> noise_specs() const;

  static ExperimentSpec from_json(std::string_view text);
  std::string to_json() const;
};

/// Room names of a size class ("S", "M", "L"), every room for "all", or the
/// comma-separated catalog names themselves.
std::vector<std::string> expand_rooms(const std::string& selector);

/// ECHOPLANE_JOBS when `requested` is unset, else hardware concurrency; at least 1.
int resolve_jobs(std::optional<int> requested);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// is rethrown after every worker has stopped.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace echoplane
