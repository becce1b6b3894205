// echoplane: generate simulated RIR datasets, run reflector locators on
// them, evaluate, ingest external recordings and compare methods.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "echoplane/error.hpp"
#include "echoplane/experiment.hpp"
#include "echoplane/pipeline.hpp"
#include "echoplane/random.hpp"
#include "echoplane/rirset_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace echoplane;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kInvalidSpec = 2,
  kIo = 3,
  kUnknownMethod = 4,
  kManifestMismatch = 5,
  kMalformedIngest = 6,
};

struct Fatal {
  int code;
  std::string message;
};

constexpr const char* kManifestName = "manifest.json";

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json plane_json(const Plane& p) { return json::array({p.normal().x(), p.normal().y(), p.normal().z(), p.offset()}); }

Plane json_plane(const json& j) {
  const Vec3 n(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
  // rounding in the text form can nudge |n| off 1
  return Plane(n.normalized(), j.at(3).get<double>() / n.norm());
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double json_num(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json load_json(const fs::path& path, int parse_code) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Fatal{kIo, e.what()};
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Fatal{parse_code, path.string() + ": " + e.what()};
  }
}

void save(const fs::path& path, std::string_view text) {
  try {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
  } catch (const std::exception& e) {
    throw Fatal{kIo, e.what()};
  }
}

std::string dataset_hash(const json& setups) {
  std::string chain;
  for (const auto& s : setups) chain += s.at("id").get<std::string>() + ":" + s.at("hash").get<std::string>() + ";";
  return content_hash(chain);
}

// --- generate ---------------------------------------------------------------

struct GenerateOpts {
  std::string spec_file;
  std::optional<std::uint64_t> seed;
  std::string rooms;
  std::optional<std::size_t> setups;
  std::vector<double> dnr;
  std::optional<int> regime;
  std::optional<int> jobs;
  std::string out;
};

std::string setup_label(const NoiseSpec& noise, const CatalogRoom& room) {
  if (noise.regime == 2) {
    std::ostringstream s;
    s << "dnr=" << noise.dnr_db;
    return s.str();
  }
  return to_string(room.size);
}

int cmd_generate(const GenerateOpts& o) {
  ExperimentSpec spec;
  spec.rooms = expand_rooms("all");
  try {
    if (!o.spec_file.empty()) {
      std::string text;
      try {
        text = read_file(o.spec_file);
      } catch (const Error& e) {
        throw Fatal{kIo, e.what()};
      }
      spec = ExperimentSpec::from_json(text);
      if (spec.rooms.empty()) spec.rooms = expand_rooms("all");
    }
    if (o.seed) spec.seed = *o.seed;
    if (!o.rooms.empty()) spec.rooms = expand_rooms(o.rooms);
    if (o.setups) spec.setups_per_room = *o.setups;
    if (o.regime) spec.regime = *o.regime;
    if (!o.dnr.empty()) spec.dnr_db = o.dnr;
    if (!o.out.empty()) spec.out = o.out;
    if (spec.regime == 2 && spec.dnr_db.empty()) spec.dnr_db = {30.0, 40.0, 50.0};
    spec.validate();
    if (spec.out.empty()) throw Error(Errc::InvalidArgument, "--out is required");
  } catch (const Error& e) {
    throw Fatal{kInvalidSpec, e.what()};
  }

  const fs::path root(spec.out);
  try {
    fs::create_directories(root);
  } catch (const std::exception& e) {
    throw Fatal{kIo, e.what()};
  }

  struct Task {
    NoiseSpec noise;
    std::size_t room;
    std::size_t setup;
  };
  std::vector<Task> tasks;
  for (const NoiseSpec& n : spec.noise_specs()) {
    for (const auto& name : spec.rooms) {
      for (std::size_t s = 0; s < spec.setups_per_room; ++s) tasks.push_back({n, catalog_index(name), s});
    }
  }

  std::vector<json> entries(tasks.size());
  parallel_for(tasks.size(), resolve_jobs(o.jobs), [&](std::size_t t) {
    const Task& task = tasks[t];
    const CatalogRoom& cr = room_catalog()[task.room];
    const SetupSeeds seeds = setup_seeds(spec.seed, task.room, task.setup);
    const RirSet set = generate_setup(task.room, seeds, task.noise);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.wav", cr.name.c_str(), task.setup);
    const fs::path rel = fs::path(task.noise.label()) / name;
    const std::string wav = encode_wav(WavData{set.fs, set.channels});
    const std::string side = sidecar_json(set);
    try {
      fs::create_directories((root / rel).parent_path());
      write_file_atomic(root / rel, wav);
      write_file_atomic(sidecar_path(root / rel), side);
    } catch (const std::exception& e) {
      throw Fatal{kIo, e.what()};
    }
    entries[t] = {{"id", task.noise.label() + "/" + cr.name + "/" + std::to_string(task.setup)},
                  {"room", cr.name},
                  {"setup", task.setup},
                  {"label", setup_label(task.noise, cr)},
                  {"regime", task.noise.regime},
                  {"dnr_db", task.noise.dnr_db},
                  {"perturbation_m", task.noise.perturbation_m},
                  {"seeds", {{"setup", seeds.setup}, {"perturbation", seeds.perturbation}, {"noise", seeds.noise}}},
                  {"wav", rel.generic_string()},
                  {"hash", content_hash(wav + side)}};
  });

  json manifest = {{"format", "echoplane-dataset"},
                   {"version", 1},
                   {"spec", json::parse(spec.to_json())},
                   {"setups", entries}};
  manifest["hash"] = dataset_hash(manifest["setups"]);
  save(root / kManifestName, manifest.dump(2));
  std::cout << "wrote " << entries.size() << " setups to " << root.string() << "\n";
  return kOk;
}

// --- ingest -----------------------------------------------------------------

int cmd_ingest(const std::string& wav_path, const std::string& geometry_path, const std::string& out) {
  if (out.empty()) throw Fatal{kInvalidSpec, "--out is required"};
  std::string wav_bytes, geometry;
  try {
    wav_bytes = read_file(wav_path);
    geometry = read_file(geometry_path);
  } catch (const Error& e) {
    throw Fatal{kIo, e.what()};
  }
  RirSet set;
  try {
    set = rirset_from_geometry(decode_wav(wav_bytes), geometry);
  } catch (const std::exception& e) {
    throw Fatal{kMalformedIngest, e.what()};
  }
  const fs::path root(out);
  const fs::path rel = fs::path("ingest") / (fs::path(wav_path).stem().string() + ".wav");
  const std::string wav = encode_wav(WavData{set.fs, set.channels});
  const std::string side = sidecar_json(set);
  try {
    fs::create_directories((root / rel).parent_path());
    write_file_atomic(root / rel, wav);
    write_file_atomic(sidecar_path(root / rel), side);
  } catch (const std::exception& e) {
    throw Fatal{kIo, e.what()};
  }
  json entry = {{"id", "ingest/" + fs::path(wav_path).stem().string()},
                {"label", "ingest"},
                {"wav", rel.generic_string()},
                {"hash", content_hash(wav + side)}};
  json manifest = {{"format", "echoplane-dataset"}, {"version", 1}, {"setups", json::array({entry})}};
  manifest["hash"] = dataset_hash(manifest["setups"]);
  save(root / kManifestName, manifest.dump(2));
  std::cout << "ingested " << set.num_mics() << " mics x " << set.num_sources() << " loudspeakers\n";
  return kOk;
}

// --- run --------------------------------------------------------------------

json load_manifest(const fs::path& dataset) {
  json m = load_json(dataset / kManifestName, kInvalidSpec);
  if (!m.contains("setups") || !m.contains("hash")) throw Fatal{kInvalidSpec, "not an echoplane dataset manifest"};
  return m;
}

json cluster_json(const ToaCluster& c) {
  json toas = json::array();
  for (Eigen::Index i = 0; i < c.toas.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < c.toas.cols(); ++k) row.push_back(num_or_null(c.toas(i, k)));
    toas.push_back(row);
  }
  std::vector<bool> valid = c.valid;
  return {{"toas", toas}, {"valid", valid}};
}

ToaCluster json_cluster(const json& j) {
  ToaCluster c;
  const auto& toas = j.at("toas");
  const auto rows = static_cast<Eigen::Index>(toas.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(toas.at(0).size()) : 0;
  c.toas.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) c.toas(i, k) = json_num(toas.at(i).at(k));
  }
  c.valid = j.at("valid").get<std::vector<bool>>();
  c.snr_db = Eigen::VectorXd::Zero(rows);
  c.medians = Eigen::VectorXd::Zero(cols);
  return c;
}

struct RunOpts {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 1;
  bool paper_faithful = false;
  std::optional<int> jobs;
  std::string out;
};

int cmd_run(const RunOpts& o) {
  const auto method = parse_method(o.method);
  if (!method) throw Fatal{kUnknownMethod, "unknown method '" + o.method + "'"};
  if (o.out.empty()) throw Fatal{kInvalidSpec, "--out is required"};
  const fs::path root(o.dataset);
  const json manifest = load_manifest(root);
  const auto& setups = manifest.at("setups");

  PipelineConfig base = o.paper_faithful ? PipelineConfig::paper_faithful() : PipelineConfig{};
  base.apply_prior();

  std::vector<json> results(setups.size());
  std::mutex log_mu;
  parallel_for(setups.size(), resolve_jobs(o.jobs), [&](std::size_t k) {
    const json& entry = setups[k];
    json r = {{"id", entry.at("id")}};
    try {
      const RirSet set = read_rirset(root / entry.at("wav").get<std::string>());
      PipelineConfig cfg = base;
      cfg.seed = derive_seed(o.seed, "run", k);
      const Preprocessed pre = preprocess(set, cfg, needs_doa(*method));
      const MethodRun run = run_method(*method, set, pre, cfg);
      json planes = json::array();
      for (const auto& pr : run.planes) {
        json p = {{"used", pr.used}};
        p["plane"] = pr.estimate ? plane_json(pr.estimate->plane) : json(nullptr);
        if (!pr.error.empty()) p["error"] = pr.error;
        planes.push_back(p);
      }
      json images = json::array();
      for (const auto& im : run.images) images.push_back(im ? vec_json(*im) : json(nullptr));
      json clusters = json::array();
      for (const auto& c : pre.clusters) clusters.push_back(cluster_json(c));
      r["seconds"] = run.seconds;
      r["onset_seconds"] = pre.onset_seconds;
      r["doa_seconds"] = pre.doa_seconds;
      r["planes"] = planes;
      r["images"] = images;
      r["clusters"] = clusters;
    } catch (const std::exception& e) {
      std::lock_guard lock(log_mu);
      std::cerr << "warning: " << entry.at("id").get<std::string>() << ": " << e.what() << "\n";
      r["error"] = e.what();
    }
    results[k] = std::move(r);
  });

  const json out = {{"format", "echoplane-estimates"},
                    {"dataset_hash", manifest.at("hash")},
                    {"method", to_string(*method)},
                    {"seed", o.seed},
                    {"paper_faithful", o.paper_faithful},
                    {"setups", results}};
  save(o.out, out.dump(2));
  std::cout << "ran " << to_string(*method) << " on " << results.size() << " setups\n";
  return kOk;
}

// --- eval -------------------------------------------------------------------

json load_estimates(const fs::path& path) {
  json e = load_json(path, kInvalidSpec);
  if (!e.contains("dataset_hash") || !e.contains("setups") || !e.contains("method")) {
    throw Fatal{kInvalidSpec, path.string() + " is not an estimates file"};
  }
  return e;
}

SetupMetrics gross_setup(const std::string& id, std::size_t num_sources, bool images) {
  SetupMetrics m;
  m.id = id;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.plane_errors_mm.assign(num_sources, nan);
  m.mu_rmse = std::nullopt;
  m.g_rmse = 100.0;
  if (images) {
    m.image_errors_mm.assign(num_sources, nan);
    m.g_eps = 100.0;
  }
  return m;
}

int cmd_eval(const std::vector<std::string>& estimate_files, const std::string& dataset, const std::string& out,
             std::optional<int> jobs) {
  if (out.empty()) throw Fatal{kInvalidSpec, "--out is required"};
  const fs::path root(dataset);
  const json manifest = load_manifest(root);
  const auto& setups = manifest.at("setups");

  std::vector<EvalReport> reports;
  for (const auto& file : estimate_files) {
    const json est = load_estimates(file);
    if (est.at("dataset_hash") != manifest.at("hash")) {
      throw Fatal{kManifestMismatch, file + " was produced from a different dataset"};
    }
    const auto method = parse_method(est.at("method").get<std::string>());
    if (!method) throw Fatal{kUnknownMethod, "unknown method in " + file};
    std::map<std::string, const json*> by_id;
    for (const auto& s : est.at("setups")) by_id[s.at("id").get<std::string>()] = &s;

    std::vector<SetupMetrics> metrics(setups.size());
    std::vector<std::string> labels(setups.size());
    std::mutex log_mu;
    parallel_for(setups.size(), resolve_jobs(jobs), [&](std::size_t k) {
      const json& entry = setups[k];
      const std::string id = entry.at("id").get<std::string>();
      labels[k] = entry.value("label", std::string("all"));
      RirSet set;
      try {
        set = read_rirset(root / entry.at("wav").get<std::string>());
      } catch (const Error& e) {
        throw Fatal{kIo, e.what()};
      }
      if (!set.truth) throw Fatal{kInvalidSpec, id + " has no ground truth; use compare instead"};
      const bool images = !is_multi_source(*method) || *method == Method::MirroredEtsac;
      const auto it = by_id.find(id);
      if (it == by_id.end() || it->second->contains("error")) {
        std::lock_guard lock(log_mu);
        std::cerr << "warning: " << id << (it == by_id.end() ? " missing from " : " failed in ") << file
                  << "; counted as gross\n";
        metrics[k] = gross_setup(id, set.num_sources(), images);
        return;
      }
      const json& s = *it->second;
      MethodRun run;
      run.method = *method;
      run.seconds = s.value("seconds", 0.0);
      for (const auto& p : s.at("planes")) {
        PlaneResult pr;
        pr.used = p.at("used").get<std::vector<std::size_t>>();
        if (!p.at("plane").is_null()) {
          ReflectorEstimate re;
          re.plane = json_plane(p.at("plane"));
          re.used_sources = pr.used;
          pr.estimate = re;
        }
        run.planes.push_back(std::move(pr));
      }
      for (const auto& im : s.value("images", json::array())) {
        run.images.push_back(im.is_null() ? std::optional<Point3>{} : std::optional<Point3>{json_vec(im)});
      }
      if (run.images.empty()) run.images.assign(set.num_sources(), std::nullopt);
      Preprocessed pre;
      for (const auto& c : s.value("clusters", json::array())) pre.clusters.push_back(json_cluster(c));
      metrics[k] = evaluate_run(run, set, pre, id);
    });

    std::vector<std::string> order;
    std::map<std::string, std::vector<SetupMetrics>> grouped;
    for (std::size_t k = 0; k < setups.size(); ++k) {
      if (!grouped.count(labels[k])) order.push_back(labels[k]);
      grouped[labels[k]].push_back(std::move(metrics[k]));
    }
    for (const auto& label : order) reports.push_back(aggregate(to_string(*method), label, grouped[label]));
  }

  json all = json::array();
  for (const auto& r : reports) all.push_back(json::parse(to_json(r)));
  const fs::path dir(out);
  save(dir / "report.json", all.dump(2));
  save(dir / "report.csv", to_csv(reports));
  save(dir / "report.md", markdown_table(reports));
  std::cout << markdown_table(reports);
  return kOk;
}

// --- compare ----------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& files, const std::string& out) {
  if (files.size() < 2) throw Fatal{kInvalidSpec, "compare needs at least two estimates files"};
  std::vector<json> est;
  for (const auto& f : files) est.push_back(load_estimates(f));
  for (std::size_t k = 1; k < est.size(); ++k) {
    if (est[k].at("dataset_hash") != est[0].at("dataset_hash")) {
      throw Fatal{kManifestMismatch, files[k] + " and " + files[0] + " come from different datasets"};
    }
  }
  std::ostringstream csv;
  csv << "setup,index,method_a,method_b,angle_deg,offset_mm\n";
  std::size_t rows = 0;
  std::vector<double> angles;
  for (std::size_t a = 0; a < est.size(); ++a) {
    for (std::size_t b = a + 1; b < est.size(); ++b) {
      std::map<std::string, const json*> other;
      for (const auto& s : est[b].at("setups")) other[s.at("id").get<std::string>()] = &s;
      for (const auto& sa : est[a].at("setups")) {
        const auto it = other.find(sa.at("id").get<std::string>());
        if (it == other.end() || !sa.contains("planes") || !it->second->contains("planes")) continue;
        const auto& pa = sa.at("planes");
        const auto& pb = it->second->at("planes");
        for (std::size_t u = 0; u < std::min(pa.size(), pb.size()); ++u) {
          if (pa[u].at("plane").is_null() || pb[u].at("plane").is_null()) continue;
          const Plane x = json_plane(pa[u].at("plane"));
          Plane y = json_plane(pb[u].at("plane"));
          if (x.normal().dot(y.normal()) < 0.0) y = y.flipped();
          const double angle = std::acos(std::clamp(x.normal().dot(y.normal()), -1.0, 1.0)) * 180.0 / M_PI;
          csv << sa.at("id").get<std::string>() << ',' << u << ',' << est[a].at("method").get<std::string>() << ','
              << est[b].at("method").get<std::string>() << ',' << angle << ','
              << 1000.0 * std::abs(x.offset() - y.offset()) << '\n';
          angles.push_back(angle);
          ++rows;
        }
      }
    }
  }
  if (!out.empty()) {
    save(out, csv.str());
  } else {
    std::cout << csv.str();
  }
  if (!angles.empty()) {
    std::nth_element(angles.begin(), angles.begin() + angles.size() / 2, angles.end());
    std::cerr << rows << " plane pairs, median angle " << angles[angles.size() / 2] << " deg\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic reflector localization from multichannel room impulse responses"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Simulate a dataset of catalog-room setups");
  g->add_option("--spec", gen.spec_file, "JSON experiment spec; flags override it");
  g->add_option("--seed", gen.seed, "Root seed");
  g->add_option("--rooms", gen.rooms, "all, S, M, L or comma-separated room names");
  g->add_option("--setups", gen.setups, "Setups per room");
  g->add_option("--regime", gen.regime, "1: 7 mm perturbation at 70 dB; 2: 1 mm with --dnr");
  g->add_option("--dnr", gen.dnr, "DNR values in dB for regime 2")->delimiter(',');
  g->add_option("--jobs", gen.jobs, "Worker threads (default: ECHOPLANE_JOBS or all cores)");
  g->add_option("--out", gen.out, "Output dataset directory");

  RunOpts run;
  auto* r = app.add_subcommand("run", "Run one method over a dataset");
  r->add_option("dataset", run.dataset, "Dataset directory")->required();
  r->add_option("--method", run.method, "ml-lib, multilat-lib, isdar-lib, mean-isdar-lib, median-isdar-lib, etsac, mirrored-etsac")
      ->required();
  r->add_option("--seed", run.seed, "Root seed for sampling stages");
  r->add_flag("--paper-faithful", run.paper_faithful, "Disable the refinements beyond the published procedure");
  r->add_option("--jobs", run.jobs, "Worker threads");
  r->add_option("--out", run.out, "Estimates JSON file");

  std::vector<std::string> eval_files;
  std::string eval_dataset, eval_out;
  std::optional<int> eval_jobs;
  auto* e = app.add_subcommand("eval", "Score estimates against a dataset's ground truth");
  e->add_option("estimates", eval_files, "Estimates JSON files")->required();
  e->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  e->add_option("--jobs", eval_jobs, "Worker threads");
  e->add_option("--out", eval_out, "Report directory");

  std::string ingest_wav, ingest_geometry, ingest_out;
  auto* in = app.add_subcommand("ingest", "Turn an external multichannel WAV into a dataset");
  in->add_option("wav", ingest_wav, "Multichannel WAV, mic-major channel order")->required();
  in->add_option("geometry", ingest_geometry, "Geometry JSON")->required();
  in->add_option("--out", ingest_out, "Output dataset directory");

  std::vector<std::string> cmp_files;
  std::string cmp_out;
  auto* c = app.add_subcommand("compare", "Pairwise plane agreement between methods");
  c->add_option("estimates", cmp_files, "Estimates JSON files")->required();
  c->add_option("--out", cmp_out, "CSV output (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& s) {
    return app.exit(s);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kInvalidSpec;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (r->parsed()) return cmd_run(run);
    if (e->parsed()) return cmd_eval(eval_files, eval_dataset, eval_out, eval_jobs);
    if (in->parsed()) return cmd_ingest(ingest_wav, ingest_geometry, ingest_out);
    if (c->parsed()) return cmd_compare(cmp_files, cmp_out);
  } catch (const Fatal& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
