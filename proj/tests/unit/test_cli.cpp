#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "echoplane/rirset_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "echoplane_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(ECHOPLANE_CLI) + " " + args + " >/dev/null 2>" + (workdir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string p(const fs::path& x) { return "'" + x.string() + "'"; }

json read_json(const fs::path& x) { return json::parse(echoplane::read_file(x)); }

// One small-room setup at 50 dB, generated once.
const fs::path& dataset() {
  static const fs::path d = [] {
    const fs::path out = workdir() / "ds";
    EXPECT_EQ(cli("generate --rooms S-0.5 --setups 2 --regime 2 --dnr 50 --seed 4 --jobs 1 --out " + p(out)), 0);
    return out;
  }();
  return d;
}

}  // namespace

TEST(Cli, GenerateWritesManifestAndRirSets) {
  const json m = read_json(dataset() / "manifest.json");
  ASSERT_EQ(m["setups"].size(), 2u);
  for (const auto& s : m["setups"]) {
    EXPECT_TRUE(fs::exists(dataset() / s["wav"].get<std::string>()));
    EXPECT_EQ(s["label"], "dnr=50");
    EXPECT_TRUE(s["seeds"].contains("noise"));
  }
  EXPECT_FALSE(m["hash"].get<std::string>().empty());
}

TEST(Cli, GenerateIsByteIdenticalOnRerun) {
  const fs::path again = workdir() / "ds_again";
  ASSERT_EQ(cli("generate --rooms S-0.5 --setups 2 --regime 2 --dnr 50 --seed 4 --jobs 2 --out " + p(again)), 0);
  const json a = read_json(dataset() / "manifest.json"), b = read_json(again / "manifest.json");
  EXPECT_EQ(a["hash"], b["hash"]);
  const std::string wav = a["setups"][0]["wav"].get<std::string>();
  EXPECT_EQ(echoplane::read_file(dataset() / wav), echoplane::read_file(again / wav));
}

TEST(Cli, InvalidSpecExitsTwo) {
  EXPECT_EQ(cli("generate --regime 3 --rooms S-0.5 --out " + p(workdir() / "bad")), 2);
  EXPECT_EQ(cli("generate --rooms Nowhere --out " + p(workdir() / "bad")), 2);
  EXPECT_EQ(cli("generate --setups 0 --rooms S-0.5 --out " + p(workdir() / "bad")), 2);
  EXPECT_EQ(cli("generate --rooms S-0.5 --bogus-flag"), 2);
  echoplane::write_file_atomic(workdir() / "spec.json", R"({"rooms": ["S-0.5"], "setups_per_room": "many"})");
  EXPECT_EQ(cli("generate --spec " + p(workdir() / "spec.json") + " --out " + p(workdir() / "bad")), 2);
  EXPECT_FALSE(fs::exists(workdir() / "bad" / "manifest.json"));
}

TEST(Cli, IoFailureExitsThree) {
  echoplane::write_file_atomic(workdir() / "plainfile", "x");
  EXPECT_EQ(cli("generate --rooms S-0.5 --setups 1 --out " + p(workdir() / "plainfile" / "sub")), 3);
  EXPECT_EQ(cli("run " + p(workdir() / "missing") + " --method etsac --out " + p(workdir() / "e.json")), 3);
}

TEST(Cli, UnknownMethodExitsFourWithoutOutput) {
  const fs::path out = workdir() / "unknown.json";
  EXPECT_EQ(cli("run " + p(dataset()) + " --method ransac-lib --out " + p(out)), 4);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, RunIsDeterministicAndEvalScoresIt) {
  const fs::path a = workdir() / "etsac_a.json", b = workdir() / "etsac_b.json";
  ASSERT_EQ(cli("run " + p(dataset()) + " --method etsac --seed 3 --jobs 1 --out " + p(a)), 0);
  ASSERT_EQ(cli("run " + p(dataset()) + " --method etsac --seed 3 --jobs 2 --out " + p(b)), 0);
  const json ea = read_json(a), eb = read_json(b);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(ea["setups"][k]["planes"], eb["setups"][k]["planes"]);

  const fs::path rep = workdir() / "rep";
  ASSERT_EQ(cli("eval " + p(a) + " --dataset " + p(dataset()) + " --out " + p(rep)), 0);
  const json r = read_json(rep / "report.json");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0]["label"], "dnr=50");
  EXPECT_TRUE(fs::exists(rep / "report.csv"));
  EXPECT_TRUE(fs::exists(rep / "report.md"));
}

TEST(Cli, OracleEstimatesGiveZeroReport) {
  const json m = read_json(dataset() / "manifest.json");
  json est = {{"format", "echoplane-estimates"}, {"dataset_hash", m["hash"]}, {"method", "isdar-lib"},
              {"setups", json::array()}};
  for (const auto& s : m["setups"]) {
    const auto set = echoplane::read_rirset(dataset() / s["wav"].get<std::string>());
    json planes = json::array(), images = json::array();
    for (std::size_t j = 0; j < set.num_sources(); ++j) {
      const auto& st = set.truth->per_source[j];
      const auto n = st.plane.normal();
      planes.push_back({{"used", {j}}, {"plane", {n.x(), n.y(), n.z(), st.plane.offset()}}});
      images.push_back({st.image.x(), st.image.y(), st.image.z()});
    }
    est["setups"].push_back({{"id", s["id"]}, {"planes", planes}, {"images", images}});
  }
  echoplane::write_file_atomic(workdir() / "oracle.json", est.dump());
  const fs::path rep = workdir() / "oracle_rep";
  ASSERT_EQ(cli("eval " + p(workdir() / "oracle.json") + " --dataset " + p(dataset()) + " --out " + p(rep)), 0);
  const json r = read_json(rep / "report.json")[0];
  EXPECT_NEAR(r["plane_rmse_mm"]["mean"].get<double>(), 0.0, 1e-6);
  EXPECT_EQ(r["plane_rmse_mm"]["gross_pct"].get<double>(), 0.0);
  EXPECT_NEAR(r["image_mm"]["mean"].get<double>(), 0.0, 1e-6);

  // Dropping one setup makes it gross with a warning.
  est["setups"].erase(1);
  echoplane::write_file_atomic(workdir() / "oracle_missing.json", est.dump());
  ASSERT_EQ(cli("eval " + p(workdir() / "oracle_missing.json") + " --dataset " + p(dataset()) + " --out " +
                p(workdir() / "missing_rep")),
            0);
  EXPECT_NE(echoplane::read_file(workdir() / "stderr.txt").find("warning"), std::string::npos);
  const json r2 = read_json(workdir() / "missing_rep" / "report.json")[0];
  EXPECT_NEAR(r2["plane_rmse_mm"]["gross_pct"].get<double>(), 50.0, 1e-9);
}

TEST(Cli, ManifestMismatchExitsFive) {
  const fs::path other = workdir() / "ds_other";
  ASSERT_EQ(cli("generate --rooms S-0.5 --setups 1 --regime 2 --dnr 50 --seed 99 --out " + p(other)), 0);
  const fs::path est = workdir() / "other.json";
  ASSERT_EQ(cli("run " + p(other) + " --method isdar-lib --out " + p(est)), 0);
  EXPECT_EQ(cli("eval " + p(est) + " --dataset " + p(dataset()) + " --out " + p(workdir() / "mm")), 5);
  EXPECT_FALSE(fs::exists(workdir() / "mm" / "report.json"));
  const fs::path mine = workdir() / "mine.json";
  ASSERT_EQ(cli("run " + p(dataset()) + " --method isdar-lib --out " + p(mine)), 0);
  EXPECT_EQ(cli("compare " + p(est) + " " + p(mine)), 5);
}

TEST(Cli, IngestRoundTripsThroughRunAndCompare) {
  const json m = read_json(dataset() / "manifest.json");
  const auto set = echoplane::read_rirset(dataset() / m["setups"][0]["wav"].get<std::string>());
  json geo = {{"center", {set.array.center.x(), set.array.center.y(), set.array.center.z()}},
              {"mics", json::array()}, {"sources", json::array()}};
  for (const auto& x : set.array.mics) geo["mics"].push_back({x.x(), x.y(), x.z()});
  for (const auto& x : set.sources) geo["sources"].push_back({x.x(), x.y(), x.z()});
  echoplane::write_wav(workdir() / "rec.wav", {set.fs, set.channels});
  echoplane::write_file_atomic(workdir() / "geo.json", geo.dump());

  const fs::path ing = workdir() / "ingested";
  ASSERT_EQ(cli("ingest " + p(workdir() / "rec.wav") + " " + p(workdir() / "geo.json") + " --out " + p(ing)), 0);
  const fs::path a = workdir() / "ing_etsac.json", b = workdir() / "ing_mean.json";
  ASSERT_EQ(cli("run " + p(ing) + " --method etsac --out " + p(a)), 0);
  ASSERT_EQ(cli("run " + p(ing) + " --method mean-isdar-lib --out " + p(b)), 0);
  EXPECT_FALSE(read_json(a)["setups"][0].contains("error"));
  ASSERT_EQ(cli("compare " + p(a) + " " + p(b) + " --out " + p(workdir() / "cmp.csv")), 0);
  EXPECT_NE(echoplane::read_file(workdir() / "cmp.csv").find("etsac,mean-isdar-lib"), std::string::npos);
  // no ground truth to score against
  EXPECT_NE(cli("eval " + p(a) + " --dataset " + p(ing) + " --out " + p(workdir() / "ing_rep")), 0);
}

TEST(Cli, MalformedIngestExitsSix) {
  echoplane::write_wav(workdir() / "three.wav", {48000, {{0.0f, 1.0f}, {0.0f, 1.0f}, {0.0f, 1.0f}}});
  echoplane::write_file_atomic(workdir() / "geo2.json", R"({"mics": [[0,0,0],[1,0,0]], "sources": [[0,1,0]]})");
  EXPECT_EQ(cli("ingest " + p(workdir() / "three.wav") + " " + p(workdir() / "geo2.json") + " --out " +
                p(workdir() / "ing_bad")),
            6);
  echoplane::write_file_atomic(workdir() / "junk.wav", "not a wav file at all");
  EXPECT_EQ(cli("ingest " + p(workdir() / "junk.wav") + " " + p(workdir() / "geo2.json") + " --out " +
                p(workdir() / "ing_bad")),
            6);
  EXPECT_FALSE(fs::exists(workdir() / "ing_bad" / "manifest.json"));
}
