#include "echoplane/eval.hpp"

#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <sstream>

#include "echoplane/error.hpp"

namespace echoplane {

FineGross split_fine_gross(const std::vector<double>& values, double threshold) {
  FineGross r;
  r.total = values.size();
  double sum = 0.0;
  for (double v : values) {
    if (std::isfinite(v) && v < threshold) {
      sum += v;
      ++r.fine;
    }
  }
  if (r.fine > 0) r.mean = sum / static_cast<double>(r.fine);
  if (r.total > 0) r.gross_pct = 100.0 * static_cast<double>(r.total - r.fine) / static_cast<double>(r.total);
  return r;
}

ToaError rmse_toa(const std::vector<double>& estimated, const std::vector<double>& truth, double c0, double fs,
                  double gross_mm) {
  if (estimated.size() != truth.size()) throw Error(Errc::ShapeMismatch, "estimate and truth differ in length");
  ToaError r;
  r.total = estimated.size();
  double sq = 0.0;
  const double mm = 1000.0 * c0 / fs;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    const double e = std::abs(estimated[i] - truth[i]) * mm;
    if (std::isfinite(e) && e <= gross_mm) {
      sq += e * e;
      ++r.fine;
    }
  }
  if (r.fine > 0) r.rmse_mm = std::sqrt(sq / static_cast<double>(r.fine));
  if (r.total > 0) r.gross_pct = 100.0 * static_cast<double>(r.total - r.fine) / static_cast<double>(r.total);
  return r;
}

FineGross image_error(const std::vector<std::optional<Point3>>& estimates, const std::vector<Point3>& truths,
                      double gross_mm) {
  if (estimates.size() != truths.size()) throw Error(Errc::ShapeMismatch, "estimate and truth differ in length");
  std::vector<double> err;
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    err.push_back(estimates[j] ? 1000.0 * (*estimates[j] - truths[j]).norm()
                               : std::numeric_limits<double>::quiet_NaN());
  }
  return split_fine_gross(err, gross_mm);
}

double plane_rmse(const Plane& estimate, const Plane& truth, const std::vector<Point3>& mics,
                  const std::vector<Point3>& sources, int points_per_segment) {
  if (points_per_segment < 1) throw Error(Errc::InvalidArgument, "need at least one point per segment");
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : sources) {
    for (const auto& m : mics) {
      for (int k = 0; k < points_per_segment; ++k) {
        const double f = points_per_segment == 1 ? 0.5 : static_cast<double>(k) / (points_per_segment - 1);
        const Point3 q = s + f * (m - s);
        sq += (project_point_onto_plane(q, estimate) - project_point_onto_plane(q, truth)).squaredNorm();
        ++n;
      }
    }
  }
  if (n == 0) throw Error(Errc::EmptyInput, "no source-microphone pairs");
  return 1000.0 * std::sqrt(sq / static_cast<double>(n));
}

double confidence_interval(const std::vector<double>& per_dataset, double zeta) {
  if (per_dataset.empty()) throw Error(Errc::EmptyInput, "no datasets");
  double mean = 0.0;
  for (double v : per_dataset) mean += v;
  mean /= static_cast<double>(per_dataset.size());
  double ss = 0.0;
  for (double v : per_dataset) ss += (v - mean) * (v - mean);
  return zeta / static_cast<double>(per_dataset.size()) * std::sqrt(ss);
}

LoloResult lolo(std::size_t num_sources,
                const std::function<std::optional<Plane>(const std::vector<std::size_t>& used)>& method,
                const Plane& truth, const std::vector<Point3>& mics, const std::vector<Point3>& sources) {
  if (num_sources < 2) throw Error(Errc::InvalidArgument, "leave-one-out needs at least 2 loudspeakers");
  if (sources.size() != num_sources) throw Error(Errc::ShapeMismatch, "source list differs from num_sources");
  LoloResult r;
  for (std::size_t out = 0; out < num_sources; ++out) {
    std::vector<std::size_t> used;
    std::vector<Point3> used_pos;
    for (std::size_t j = 0; j < num_sources; ++j) {
      if (j == out) continue;
      used.push_back(j);
      used_pos.push_back(sources[j]);
    }
    double e = std::numeric_limits<double>::quiet_NaN();
    try {
      if (const auto plane = method(used)) e = plane_rmse(*plane, truth, mics, used_pos);
    } catch (const Error&) {
    }
    r.rmse_mm.push_back(e);
  }
  r.summary = split_fine_gross(r.rmse_mm, kGrossPlaneMm);
  return r;
}

namespace {

MetricSummary summarize(const std::vector<SetupMetrics>& setups, double threshold,
                        const std::vector<double> SetupMetrics::*samples) {
  std::vector<double> pooled;
  std::vector<double> per_setup;
  for (const auto& s : setups) {
    const auto& v = s.*samples;
    pooled.insert(pooled.end(), v.begin(), v.end());
    if (const auto fg = split_fine_gross(v, threshold); fg.mean) per_setup.push_back(*fg.mean);
  }
  MetricSummary m;
  if (pooled.empty()) return m;
  const FineGross fg = split_fine_gross(pooled, threshold);
  m.mean = fg.mean;
  m.gross_pct = fg.gross_pct;
  if (!per_setup.empty()) m.ci = confidence_interval(per_setup);
  return m;
}

MetricSummary summarize_toa(const std::vector<SetupMetrics>& setups) {
  std::vector<double> pooled;
  std::vector<double> per_setup;
  for (const auto& s : setups) {
    pooled.insert(pooled.end(), s.toa_errors_mm.begin(), s.toa_errors_mm.end());
    double sq = 0.0;
    std::size_t n = 0;
    for (double e : s.toa_errors_mm) {
      if (std::isfinite(e) && e <= kGrossToaMm) {
        sq += e * e;
        ++n;
      }
    }
    if (n > 0) per_setup.push_back(std::sqrt(sq / static_cast<double>(n)));
  }
  MetricSummary m;
  if (pooled.empty()) return m;
  double sq = 0.0;
  std::size_t n = 0;
  for (double e : pooled) {
    if (std::isfinite(e) && e <= kGrossToaMm) {
      sq += e * e;
      ++n;
    }
  }
  if (n > 0) m.mean = std::sqrt(sq / static_cast<double>(n));
  m.gross_pct = 100.0 * static_cast<double>(pooled.size() - n) / static_cast<double>(pooled.size());
  if (!per_setup.empty()) m.ci = confidence_interval(per_setup);
  return m;
}

using nlohmann::json;

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metric_json(const MetricSummary& m) {
  return {{"mean", opt(m.mean)}, {"gross_pct", opt(m.gross_pct)}, {"ci", opt(m.ci)}};
}

std::string cell(const std::optional<double>& v, int precision = 1) {
  if (!v) return "";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << *v;
  return out.str();
}

}  // namespace

EvalReport aggregate(std::string method, std::string label, std::vector<SetupMetrics> setups) {
  EvalReport r;
  r.method = std::move(method);
  r.label = std::move(label);
  r.toa = summarize_toa(setups);
  r.eps = summarize(setups, kGrossImageMm, &SetupMetrics::image_errors_mm);
  r.rmse = summarize(setups, kGrossPlaneMm, &SetupMetrics::plane_errors_mm);
  double secs = 0.0;
  std::size_t n = 0;
  for (const auto& s : setups) {
    if (s.seconds) {
      secs += *s.seconds;
      ++n;
    }
  }
  if (n > 0) r.mean_seconds = secs / static_cast<double>(n);
  r.setups = std::move(setups);
  return r;
}

std::string to_json(const EvalReport& report) {
  json setups = json::array();
  for (const auto& s : report.setups) {
    setups.push_back({{"id", s.id},
                      {"rmse_toa_mm", opt(s.rmse_toa)},
                      {"g_toa_pct", opt(s.g_toa)},
                      {"mu_eps_mm", opt(s.mu_eps)},
                      {"g_eps_pct", opt(s.g_eps)},
                      {"mu_rmse_mm", opt(s.mu_rmse)},
                      {"g_rmse_pct", opt(s.g_rmse)},
                      {"seconds", opt(s.seconds)}});
  }
  const json j = {{"method", report.method},
                  {"label", report.label},
                  {"toa_mm", metric_json(report.toa)},
                  {"image_mm", metric_json(report.eps)},
                  {"plane_rmse_mm", metric_json(report.rmse)},
                  {"mean_seconds", opt(report.mean_seconds)},
                  {"setups", setups}};
  return j.dump(2);
}

std::string to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "method,label,rmse_toa_mm,g_toa_pct,mu_eps_mm,g_eps_pct,mu_rmse_mm,g_rmse_pct,ci_rmse_mm,mean_seconds\n";
  for (const auto& r : reports) {
    out << r.method << ',' << r.label << ',' << cell(r.toa.mean, 3) << ',' << cell(r.toa.gross_pct, 2) << ','
        << cell(r.eps.mean, 3) << ',' << cell(r.eps.gross_pct, 2) << ',' << cell(r.rmse.mean, 3) << ','
        << cell(r.rmse.gross_pct, 2) << ',' << cell(r.rmse.ci, 3) << ',' << cell(r.mean_seconds, 4) << '\n';
  }
  return out.str();
}

std::string markdown_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> labels, methods;
  std::map<std::pair<std::string, std::string>, const EvalReport*> grid;
  for (const auto& r : reports) {
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    grid[{r.method, r.label}] = &r;
  }
  std::ostringstream out;
  out << "| Method |";
  for (const auto& l : labels) out << ' ' << l << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < labels.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& m : methods) {
    out << "| " << m << " |";
    for (const auto& l : labels) {
      const auto it = grid.find({m, l});
      if (it == grid.end()) {
        out << "  |";
        continue;
      }
      const auto& rm = it->second->rmse;
      out << ' ' << (rm.mean ? cell(rm.mean) : std::string("--")) << " (" << cell(rm.gross_pct.value_or(100.0))
          << "%) |";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace echoplane
