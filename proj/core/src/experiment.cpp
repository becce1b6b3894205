#include "echoplane/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "echoplane/error.hpp"
#include "echoplane/random.hpp"

namespace echoplane {

NoiseSpec NoiseSpec::regime1() { return {1, 0.007, 70.0}; }
NoiseSpec NoiseSpec::regime2(double dnr_db) { return {2, 0.001, dnr_db}; }
NoiseSpec NoiseSpec::noiseless() { return {0, 0.0, std::numeric_limits<double>::infinity()}; }

std::string NoiseSpec::label() const {
  if (regime == 1) return "regime1";
  if (regime == 2) {
    std::ostringstream out;
    out << "dnr" << dnr_db;
    return out.str();
  }
  return "noiseless";
}

SetupSeeds setup_seeds(std::uint64_t root, std::size_t room_index, std::size_t setup_index) {
  const std::uint64_t idx = 1000 * room_index + setup_index;
  return {derive_seed(root, "setup", idx), derive_seed(root, "perturbation", idx), derive_seed(root, "noise", idx)};
}

std::size_t catalog_index(const std::string& name) {
  const auto& cat = room_catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat[i].name == name) return i;
  }
  throw Error(Errc::InvalidArgument, "unknown room '" + name + "'");
}

RirSet generate_setup(std::size_t room_index, const SetupSeeds& seeds, const NoiseSpec& noise,
                      std::size_t num_sources, double fs) {
  const auto& cat = room_catalog();
  if (room_index >= cat.size()) throw Error(Errc::InvalidArgument, "room index out of range");
  const CatalogRoom& cr = cat[room_index];
  const Setup setup =
      random_setup(cr.room, num_sources, source_radius(cr.size), wall_clearance(cr.size), seeds.setup);
  RirSet set = simulate(cr.room, setup.array, setup.sources, fs);
  if (noise.perturbation_m > 0.0) set = perturb_mics(set, noise.perturbation_m, seeds.perturbation);
  if (std::isfinite(noise.dnr_db)) set = add_noise(set, noise.dnr_db, seeds.noise);
  return set;
}

void ExperimentSpec::validate() const {
  if (rooms.empty()) throw Error(Errc::InvalidArgument, "no rooms selected");
  for (const auto& r : rooms) catalog_index(r);
  if (setups_per_room < 1) throw Error(Errc::InvalidArgument, "setups per room must be at least 1");
  if (regime != 1 && regime != 2) throw Error(Errc::InvalidArgument, "regime must be 1 or 2");
  if (regime == 2 && dnr_db.empty()) throw Error(Errc::InvalidArgument, "regime 2 needs at least one DNR");
  for (double d : dnr_db) {
    if (!std::isfinite(d)) throw Error(Errc::InvalidArgument, "DNR must be finite");
  }
}

std::vector<NoiseSpec> ExperimentSpec::noise_specs() const {
  if (regime == 1) return {NoiseSpec::regime1()};
  std::vector<NoiseSpec> out;
  for (double d : dnr_db) out.push_back(NoiseSpec::regime2(d));
  return out;
}

ExperimentSpec ExperimentSpec::from_json(std::string_view text) {
  ExperimentSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw Error(Errc::InvalidArgument, "experiment spec must be a JSON object");
    if (j.contains("rooms")) {
      s.rooms.clear();
      if (j["rooms"].is_string()) {
        s.rooms = expand_rooms(j["rooms"].get<std::string>());
      } else {
        for (const auto& r : j["rooms"]) s.rooms.push_back(r.get<std::string>());
      }
    }
    if (j.contains("setups_per_room")) {
      const auto n = j["setups_per_room"].get<long long>();
      if (n < 1) throw Error(Errc::InvalidArgument, "setups per room must be at least 1");
      s.setups_per_room = static_cast<std::size_t>(n);
    }
    s.regime = j.value("regime", s.regime);
    s.dnr_db = j.value("dnr_db", s.dnr_db);
    s.methods = j.value("methods", s.methods);
    s.seed = j.value("seed", s.seed);
    s.out = j.value("out", s.out);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("experiment spec: ") + e.what());
  }
  return s;
}

std::string ExperimentSpec::to_json() const {
  const nlohmann::json j = {{"rooms", rooms}, {"setups_per_room", setups_per_room},
                            {"regime", regime}, {"dnr_db", dnr_db},
                            {"methods", methods}, {"seed", seed},
                            {"out", out}};
  return j.dump(2);
}

std::vector<std::string> expand_rooms(const std::string& selector) {
  std::vector<std::string> out;
  std::stringstream in(selector);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    bool matched = false;
    for (const auto& r : room_catalog()) {
      if (tok == "all" || tok == to_string(r.size)) {
        out.push_back(r.name);
        matched = true;
      }
    }
    if (!matched) {
      catalog_index(tok);
      out.push_back(tok);
    }
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, "empty room selection");
  return out;
}

int resolve_jobs(std::optional<int> requested) {
  if (requested) return std::max(1, *requested);
  if (const char* env = std::getenv("ECHOPLANE_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace echoplane
