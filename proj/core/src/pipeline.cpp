#include "echoplane/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "echoplane/error.hpp"
#include "echoplane/random.hpp"

namespace echoplane {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr std::pair<Method, std::string_view> kNames[] = {
    {Method::MlLib, "ml-lib"},
    {Method::MultilatLib, "multilat-lib"},
    {Method::IsdarLib, "isdar-lib"},
    {Method::MeanIsdarLib, "mean-isdar-lib"},
    {Method::MedianIsdarLib, "median-isdar-lib"},
    {Method::Etsac, "etsac"},
    {Method::MirroredEtsac, "mirrored-etsac"},
};

}  // namespace

std::string to_string(Method m) {
  for (const auto& [k, v] : kNames) {
    if (k == m) return std::string(v);
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [k, v] : kNames) {
    if (v == name) return k;
  }
  return std::nullopt;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> all = [] {
    std::vector<Method> v;
    for (const auto& [k, name] : kNames) v.push_back(k);
    return v;
  }();
  return all;
}

bool is_multi_source(Method m) {
  return m == Method::MeanIsdarLib || m == Method::MedianIsdarLib || m == Method::Etsac ||
         m == Method::MirroredEtsac;
}

bool needs_doa(Method m) {
  return m == Method::IsdarLib || m == Method::MeanIsdarLib || m == Method::MedianIsdarLib;
}

PipelineConfig PipelineConfig::paper_faithful() {
  PipelineConfig c;
  c.onset.noise_gate = 0.0;
  c.onset.median_gate = 0.0;
  c.ml.refine = false;
  c.etsac.refine = false;
  c.isdar_curvature = false;
  c.doa_toa_check = false;
  c.etsac.anchor = EtsacAnchor::First;
  c.etsac.roots = EtsacRoots::PlusOnly;
  return c;
}

void PipelineConfig::apply_prior() {
  dsb.prior = prior;
  ml.prior = prior;
  etsac.nearest_plane_prior = prior != HemispherePrior::None;
}

Preprocessed preprocess(const RirSet& set, const PipelineConfig& cfg, bool with_doa) {
  Preprocessed pre;
  auto t0 = Clock::now();
  if (cfg.inject_truth_toas) {
    pre.clusters = truth_clusters(set);
  } else if (cfg.plain_dypsa) {
    pre.clusters = dypsa_clusters(set, cfg.onset);
  } else {
    pre.clusters = cdypsa(set, cfg.onset);
  }
  pre.onset_seconds = since(t0);
  pre.doas.assign(set.num_sources(), std::nullopt);
  if (with_doa) {
    t0 = Clock::now();
    for (std::size_t j = 0; j < set.num_sources(); ++j) {
      try {
        const Segment seg = segment(set, pre.clusters[j], j, 1, cfg.segment_seconds);
        if (!cfg.doa_toa_check) {
          pre.doas[j] = dsb_doa(seg, set.array, set.c0, set.fs, cfg.dsb);
          continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (const Doa& d : dsb_doa_candidates(seg, set.array, set.c0, set.fs, cfg.dsb, 0.5)) {
          const double r = toa_pattern_residual(pre.clusters[j], 1, d, set.array, set.c0, set.fs);
          if (r < best) {
            best = r;
            pre.doas[j] = d;
          }
        }
      } catch (const Error&) {
      }
    }
    pre.doa_seconds = since(t0);
  }
  return pre;
}

namespace {

std::optional<Point3> locate_image(Method m, std::size_t j, const RirSet& set, const Preprocessed& pre,
                                   const PipelineConfig& cfg) {
  try {
    switch (m) {
      case Method::MlLib:
        return ml_locate(pre.clusters[j], set.array, set.c0, set.fs, cfg.ml,
                         derive_seed(cfg.seed, "ml-sampling", j), j)
            .position;
      case Method::MultilatLib:
        return multilaterate(pre.clusters[j], set.array, set.c0, set.fs, cfg.multilat_combos,
                             derive_seed(cfg.seed, "multilat", j), j, cfg.prior)
            .estimate.position;
      case Method::IsdarLib:
      case Method::MeanIsdarLib:
      case Method::MedianIsdarLib:
        if (!pre.doas[j]) return std::nullopt;
        if (cfg.isdar_curvature) {
          const double rho = curvature_corrected_range(pre.clusters[j], *pre.doas[j], set.array, set.c0, set.fs);
          return isdar(rho, *pre.doas[j], set.array.center, j).position;
        }
        return isdar(pre.clusters[j], *pre.doas[j], set.array, set.c0, set.fs, j).position;
      default:
        return std::nullopt;
    }
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

MethodRun run_method(Method method, const RirSet& set, const Preprocessed& pre, const PipelineConfig& cfg) {
  const std::size_t L = set.num_sources();
  if (pre.clusters.size() != L) throw Error(Errc::ShapeMismatch, "preprocessing does not match the RirSet");
  MethodRun run;
  run.method = method;
  run.images.assign(L, std::nullopt);
  const auto t0 = Clock::now();

  if (!is_multi_source(method)) {
    for (std::size_t j = 0; j < L; ++j) {
      PlaneResult pr;
      pr.used = {j};
      run.images[j] = locate_image(method, j, set, pre, cfg);
      if (!run.images[j]) {
        pr.error = "image localization failed";
      } else {
        try {
          pr.estimate = lib(set.sources[j], *run.images[j], j);
        } catch (const Error& e) {
          pr.error = e.what();
        }
      }
      run.planes.push_back(std::move(pr));
    }
    run.seconds = since(t0);
    return run;
  }

  if (L < 2) throw Error(Errc::InvalidArgument, "multi-source methods need at least 2 loudspeakers");
  std::vector<std::optional<LibPlane>> lib_planes(L);
  if (method == Method::MeanIsdarLib || method == Method::MedianIsdarLib) {
    for (std::size_t j = 0; j < L; ++j) {
      run.images[j] = locate_image(method, j, set, pre, cfg);
      if (run.images[j]) {
        try {
          lib_planes[j] = lib_plane(set.sources[j], *run.images[j]);
        } catch (const Error&) {
        }
      }
    }
  }
  for (std::size_t out = 0; out < L; ++out) {
    PlaneResult pr;
    for (std::size_t j = 0; j < L; ++j) {
      if (j != out) pr.used.push_back(j);
    }
    try {
      if (method == Method::Etsac || method == Method::MirroredEtsac) {
        EtsacConfig ec = cfg.etsac;
        ec.seed = derive_seed(cfg.seed, "ransac", out);
        pr.estimate = etsac(pre.clusters, set.array, set.sources, pr.used, set.c0, set.fs, ec);
        if (method == Method::MirroredEtsac) {
          run.images[out] = reflect_point(set.sources[out], pr.estimate->plane);
        }
      } else {
        std::vector<LibPlane> planes;
        std::vector<std::size_t> idx;
        for (std::size_t j : pr.used) {
          if (lib_planes[j]) {
            planes.push_back(*lib_planes[j]);
            idx.push_back(j);
          }
        }
        if (planes.empty()) throw Error(Errc::EmptyInput, "no loudspeaker produced an image");
        pr.estimate = method == Method::MeanIsdarLib ? mean_isdar_lib(planes, idx) : median_isdar_lib(planes, idx);
      }
    } catch (const Error& e) {
      pr.error = e.what();
    }
    run.planes.push_back(std::move(pr));
  }
  run.seconds = since(t0);
  return run;
}

std::vector<double> toa_errors_mm(const std::vector<ToaCluster>& clusters, const RirSet& set) {
  if (!set.truth) throw Error(Errc::MissingGroundTruth, "RirSet carries no ground truth");
  const std::size_t L = set.num_sources();
  const double mm = 1000.0 * set.c0 / set.fs;
  std::vector<double> out;
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    const ToaCluster& c = clusters[j];
    for (std::size_t i = 0; i < c.num_channels(); ++i) {
      if (!c.valid[i]) continue;
      const auto r = static_cast<Eigen::Index>(i);
      out.push_back(std::abs(c.toas(r, 0) - set.truth->toa_direct[i * L + j]) * mm);
      out.push_back(std::abs(c.toas(r, 1) - set.truth->toa_reflection[i * L + j]) * mm);
    }
  }
  return out;
}

SetupMetrics evaluate_run(const MethodRun& run, const RirSet& set, const Preprocessed& pre, std::string id) {
  if (!set.truth) throw Error(Errc::MissingGroundTruth, "RirSet carries no ground truth");
  const GroundTruth& gt = *set.truth;
  SetupMetrics m;
  m.id = std::move(id);
  m.seconds = run.seconds;
  m.toa_errors_mm = toa_errors_mm(pre.clusters, set);
  if (!m.toa_errors_mm.empty()) {
    double sq = 0.0;
    std::size_t n = 0;
    for (double e : m.toa_errors_mm) {
      if (std::isfinite(e) && e <= kGrossToaMm) {
        sq += e * e;
        ++n;
      }
    }
    if (n > 0) m.rmse_toa = std::sqrt(sq / static_cast<double>(n));
    const auto total = static_cast<double>(m.toa_errors_mm.size());
    m.g_toa = 100.0 * (total - static_cast<double>(n)) / total;
  }

  const bool multi = is_multi_source(run.method);
  for (std::size_t u = 0; u < run.planes.size(); ++u) {
    const PlaneResult& pr = run.planes[u];
    double e = std::numeric_limits<double>::quiet_NaN();
    if (pr.estimate) {
      std::vector<Point3> used_pos;
      for (std::size_t j : pr.used) used_pos.push_back(set.sources[j]);
      const Plane& truth = multi ? gt.reflector : gt.per_source[u].plane;
      e = plane_rmse(pr.estimate->plane, truth, set.array.mics, used_pos);
    }
    m.plane_errors_mm.push_back(e);
  }
  const FineGross pf = split_fine_gross(m.plane_errors_mm, kGrossPlaneMm);
  m.mu_rmse = pf.mean;
  m.g_rmse = pf.gross_pct;

  bool any_image = false;
  for (const auto& im : run.images) any_image = any_image || im.has_value();
  if (any_image || run.method == Method::MirroredEtsac || !multi) {
    std::vector<Point3> truths;
    for (const auto& st : gt.per_source) truths.push_back(st.image);
    const FineGross ie = image_error(run.images, truths);
    for (std::size_t j = 0; j < run.images.size(); ++j) {
      m.image_errors_mm.push_back(run.images[j] ? 1000.0 * (*run.images[j] - truths[j]).norm()
                                                : std::numeric_limits<double>::quiet_NaN());
    }
    m.mu_eps = ie.mean;
    m.g_eps = ie.gross_pct;
  }
  return m;
}

}  // namespace echoplane
