#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "echoplane/error.hpp"
#include "echoplane/onset.hpp"

using namespace echoplane;

namespace {

constexpr double kFs = 48000.0;

// Band-limited pulse of amplitude `amp` centered at fractional sample `at`.
void add_pulse(std::vector<float>& x, double at, double amp) {
  for (int n = static_cast<int>(at) - 40; n <= static_cast<int>(at) + 40; ++n) {
    if (n < 0 || n >= static_cast<int>(x.size())) continue;
    const double t = n - at;
    const double sinc = std::abs(t) < 1e-12 ? 1.0 : std::sin(M_PI * t) / (M_PI * t);
    const double w = 0.5 + 0.5 * std::cos(M_PI * t / 41.0);
    x[static_cast<std::size_t>(n)] += static_cast<float>(amp * sinc * w);
  }
}

std::vector<float> two_echoes(double direct, double reflection, double gain = 0.5) {
  std::vector<float> x(2000, 0.0f);
  add_pulse(x, direct, 1.0);
  add_pulse(x, reflection, gain);
  return x;
}

}  // namespace

TEST(PhaseSlope, CrossesZeroAtImpulse) {
  std::vector<float> x(600, 0.0f);
  x[300] = 1.0f;
  const auto s = phase_slope(x, 3.5e-3, kFs);
  ASSERT_EQ(s.size(), x.size());
  EXPECT_LT(s[298], 0.0);
  EXPECT_NEAR(s[300], 0.0, 1e-9);
  EXPECT_GT(s[302], 0.0);
  EXPECT_EQ(phase_slope(std::vector<float>(400, 0.0f), 3.5e-3, kFs), std::vector<double>(400, 0.0));
  EXPECT_THROW(phase_slope(std::vector<float>(100, 0.0f), 3.5e-3, kFs), Error);
}

TEST(Dypsa, FractionalOnsetsOfTwoPulses) {
  const auto x = two_echoes(400.3, 611.7);
  const auto toas = dypsa(x, OnsetConfig{}, kFs);
  ASSERT_GE(toas.size(), 2u);
  EXPECT_NEAR(toas[0], 400.3, 0.1);
  EXPECT_NEAR(toas[1], 611.7, 0.1);
}

TEST(Dypsa, ClosePulsesInsideOneFrameAreSplit) {
  // 18 samples apart: both peaks share one group-delay window.
  const auto x = two_echoes(500.0, 518.0, 0.6);
  const auto cands = onset_candidates(x, 3.5e-3, kFs);
  int near_first = 0, near_second = 0;
  for (const auto& c : cands) {
    near_first += std::abs(c.toa - 500.0) < 1.0;
    near_second += std::abs(c.toa - 518.0) < 1.0;
  }
  EXPECT_GE(near_first, 1);
  EXPECT_GE(near_second, 1);
}

TEST(Dypsa, ComparablePulsesSharingOneCrossingAreBothFound) {
  // 47 samples apart with similar energy: the centroid crosses zero only once,
  // between them.
  const auto x = two_echoes(285.0, 332.0, 0.85);
  const auto toas = dypsa(x, OnsetConfig{}, kFs);
  ASSERT_GE(toas.size(), 2u);
  EXPECT_NEAR(toas[0], 285.0, 0.1);
  EXPECT_NEAR(toas[1], 332.0, 0.1);
}

TEST(Dypsa, AmplitudeGateDropsWeakPulse) {
  std::vector<float> x(2000, 0.0f);
  add_pulse(x, 400.0, 1.0);
  add_pulse(x, 800.0, 0.01);  // -40 dB
  const auto toas = dypsa(x, OnsetConfig{}, kFs);
  ASSERT_EQ(toas.size(), 1u);
  EXPECT_NEAR(toas[0], 400.0, 0.1);
}

TEST(Dypsa, SilenceHasNoOnsets) {
  try {
    dypsa(std::vector<float>(1000, 0.0f), OnsetConfig{}, kFs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoOnsets);
  }
}

TEST(OnsetConfig, RejectsOutOfRangeThresholds) {
  OnsetConfig c;
  c.tau_s = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = OnsetConfig{};
  c.num_reflections = 1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Grubbs, CriticalValuesMatchTable) {
  // Two-sided, alpha = 0.05.
  EXPECT_NEAR(grubbs_critical(3, 0.05), 1.1543, 2e-3);
  EXPECT_NEAR(grubbs_critical(10, 0.05), 2.290, 2e-3);
  EXPECT_NEAR(grubbs_critical(20, 0.05), 2.709, 2e-3);
  EXPECT_NEAR(grubbs_critical(30, 0.05), 2.908, 2e-3);
  EXPECT_TRUE(std::isinf(grubbs_critical(2, 0.05)));
}

TEST(Grubbs, FindsPlantedOutliersOnly) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(100.0, 0.3);
  std::vector<double> v(48);
  for (auto& x : v) x = n(rng);
  EXPECT_TRUE(grubbs_outliers(v, 0.05).size() <= 1);
  v[7] = 110.0;
  v[30] = 92.0;
  const auto out = grubbs_outliers(v, 0.05);
  EXPECT_NE(std::find(out.begin(), out.end(), 7u), out.end());
  EXPECT_NE(std::find(out.begin(), out.end(), 30u), out.end());
  EXPECT_TRUE(grubbs_outliers(std::vector<double>(10, 1.0), 0.05).empty());
}

TEST(Cluster, DropsFalsePositiveAndMasksOutlierChannel) {
  std::vector<std::vector<double>> lists;
  for (int i = 0; i < 24; ++i) lists.push_back({300.0 + 0.1 * (i % 3), 500.0 + 0.1 * (i % 4), 700.0});
  lists[3] = {300.1, 420.0, 500.2, 700.0};  // spurious onset between direct and reflection
  lists[9] = {300.0, 560.0, 700.0};         // reflection far off on one channel
  OnsetConfig cfg;
  const ToaCluster c = cluster_onsets(lists, cfg);
  EXPECT_TRUE(c.valid[3]);
  EXPECT_NEAR(c.toas(3, 1), 500.2, 1e-12);
  EXPECT_FALSE(c.valid[9]);
  EXPECT_EQ(c.num_valid(), 23u);
  EXPECT_NEAR(c.mean_toa(0), 300.1, 0.05);
}

TEST(Cluster, KeepsReflectionSpreadAcrossTheAperture) {
  // First reflection sweeps 262..291 across the array with a second echo
  // 15..20 samples behind it; both are genuine and must stay in order.
  std::vector<std::vector<double>> lists;
  for (int i = 0; i < 24; ++i) {
    const double r = 262.0 + 29.0 * std::abs(std::sin(M_PI * i / 24.0));
    lists.push_back({128.0 + r - 262.0, r, r + 20.0 - 5.0 * (r - 262.0) / 29.0, 440.0});
  }
  OnsetConfig cfg;
  const ToaCluster c = cluster_onsets(lists, cfg);
  for (int i = 0; i < 24; ++i) EXPECT_EQ(c.toas(i, 1), lists[static_cast<std::size_t>(i)][1]) << i;
  // Without the gate the median-closest rule swaps in the second echo.
  cfg.median_gate = 0.0;
  const ToaCluster ungated = cluster_onsets(lists, cfg);
  int swapped = 0;
  for (int i = 0; i < 24; ++i) swapped += ungated.toas(i, 1) != lists[static_cast<std::size_t>(i)][1];
  EXPECT_GT(swapped, 0);
}

TEST(Cluster, NeedsFourChannels) {
  EXPECT_THROW(cluster_onsets({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, OnsetConfig{}), Error);
}

TEST(Cluster, CsvHasOneRowPerChannelAndIndex) {
  std::vector<std::vector<double>> lists(4, {10.0, 20.0});
  OnsetConfig cfg;
  cfg.num_reflections = 2;
  const std::string csv = cluster_onsets(lists, cfg).to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 2);
}

TEST(Cdypsa, NoiselessSimulationWithinOneSample) {
  const RoomSpec room{Vec3(6.0, 5.0, 3.0), 0.5, 3};
  const echoplane::Setup s = random_setup(room, 2, 1.0, 0.22, 12);
  const RirSet set = simulate(room, s.array, s.sources, kFs);
  const auto clusters = cdypsa(set, OnsetConfig{});
  ASSERT_EQ(clusters.size(), 2u);
  const auto truth = truth_clusters(set);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(truth[j].num_valid(), set.num_mics());
    std::size_t good = 0;
    for (std::size_t i = 0; i < set.num_mics(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (!clusters[j].valid[i]) continue;
      good += std::abs(clusters[j].toas(r, 0) - truth[j].toas(r, 0)) < 1.0 &&
              std::abs(clusters[j].toas(r, 1) - truth[j].toas(r, 1)) < 1.0;
    }
    EXPECT_GE(good, set.num_mics() * 95 / 100);
  }
}
