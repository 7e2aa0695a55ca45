#include "cmde/kernelcheck.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "cmde/parallel.hpp"
#include "cmde/serialize.hpp"
#include "cmde/svg.hpp"

namespace cmde {

EmpiricalCovariance empirical_prior_covariance(const CoregionalizationSpec& spec,
                                               std::span<const NetworkArchitecture> architectures,
                                               const DenseMatrix& grid, std::size_t draws,
                                               std::uint64_t seed,
                                               const std::optional<ModalityPlan>& plan) {
  if (draws < 2) throw Error(ErrorKind::kInvalidArchitecture, "need at least two draws");
  if (grid.rows() == 0) throw Error(ErrorKind::kInvalidArchitecture, "grid is empty");
  const std::size_t c_count = mixing_layout(spec).outputs;
  const std::size_t p = grid.rows() * c_count;
  SeededRng root(seed);
  std::vector<SeededRng> streams = root.split(draws);
  std::vector<double> samples(draws * p);
  parallel_for(draws, [&](std::size_t d) {
    const Baselearner bl = build_baselearner(streams[d], spec, architectures, grid.cols(), plan);
    BaselearnerWorkspace ws;
    for (std::size_t i = 0; i < grid.rows(); ++i) {
      evaluate(bl, grid.row(i), ws);
      for (std::size_t c = 0; c < c_count; ++c) samples[d * p + i * c_count + c] = ws.outputs[c];
    }
  });
  EmpiricalCovariance out;
  out.draws = draws;
  out.covariance = DenseMatrix(p, p);
  out.standard_error = DenseMatrix(p, p);
  out.mean.assign(p, 0.0);
  out.mean_standard_error.assign(p, 0.0);
  DenseMatrix sq(p, p);
  std::vector<double> sq_mean(p, 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    const double* f = samples.data() + d * p;
    for (std::size_t a = 0; a < p; ++a) {
      out.mean[a] += f[a];
      sq_mean[a] += f[a] * f[a];
      for (std::size_t b = a; b < p; ++b) {
        const double prod = f[a] * f[b];
        out.covariance(a, b) += prod;
        sq(a, b) += prod * prod;
      }
    }
  }
  const double nd = static_cast<double>(draws);
  for (std::size_t a = 0; a < p; ++a) {
    out.mean[a] /= nd;
    const double var = std::max(0.0, sq_mean[a] / nd - out.mean[a] * out.mean[a]);
    out.mean_standard_error[a] = std::sqrt(var * nd / (nd - 1.0) / nd);
    for (std::size_t b = a; b < p; ++b) {
      const double m = out.covariance(a, b) / nd;
      const double v = std::max(0.0, sq(a, b) / nd - m * m);
      out.covariance(a, b) = m;
      out.covariance(b, a) = m;
      out.standard_error(a, b) = std::sqrt(v * nd / (nd - 1.0) / nd);
      out.standard_error(b, a) = out.standard_error(a, b);
    }
  }
  return out;
}

DenseMatrix analytic_prior_covariance(const CoregionalizationSpec& spec,
                                      std::span<const NetworkArchitecture> architectures,
                                      const DenseMatrix& grid,
                                      const std::optional<ModalityPlan>& plan) {
  return stacked_covariance(implied_matrix_kernel(spec, architectures, plan), grid);
}

ConvergenceReport convergence_sweep(const CoregionalizationSpec& spec,
                                    std::span<const NetworkArchitecture> architectures,
                                    std::span<const std::size_t> widths, std::size_t draws,
                                    const DenseMatrix& grid, std::uint64_t seed,
                                    std::size_t replicates,
                                    const std::optional<ModalityPlan>& plan) {
  if (widths.size() < 2) {
    throw Error(ErrorKind::kInvalidArchitecture, "a convergence sweep needs at least two widths");
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0 || (i > 0 && widths[i] <= widths[i - 1])) {
      throw Error(ErrorKind::kInvalidArchitecture, "sweep widths must be positive and increasing");
    }
  }
  if (replicates == 0) throw Error(ErrorKind::kInvalidArchitecture, "need at least one replicate");
  ConvergenceReport report;
  report.spec = spec;
  report.architectures.assign(architectures.begin(), architectures.end());
  report.grid = grid;
  report.draws = draws;
  report.replicates = replicates;
  report.seed = seed;
  const DenseMatrix target = analytic_prior_covariance(spec, architectures, grid, plan);
  for (std::size_t w : widths) {
    std::vector<NetworkArchitecture> archs(architectures.begin(), architectures.end());
    for (auto& a : archs) {
      if (a.hidden_widths.empty()) {
        throw Error(ErrorKind::kInvalidArchitecture, "sweep needs at least one hidden layer");
      }
      for (auto& h : a.hidden_widths) h = w;
    }
    WidthResult res{w, {}, 0.0, 0.0, 0.0};
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < replicates; ++r) {
      const auto emp = empirical_prior_covariance(spec, archs, grid, draws, seed + r, plan);
      res.errors.push_back(relative_frobenius_error(emp.covariance, target));
    }
    res.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (double e : res.errors) res.mean_error += e;
    res.mean_error /= static_cast<double>(replicates);
    for (double e : res.errors) res.sd_error += (e - res.mean_error) * (e - res.mean_error);
    res.sd_error = replicates > 1 ? std::sqrt(res.sd_error / static_cast<double>(replicates - 1)) : 0.0;
    report.widths.push_back(std::move(res));
  }
  report.non_increasing = true;
  for (std::size_t i = 1; i < report.widths.size(); ++i) {
    if (report.widths[i].mean_error > report.widths[i - 1].mean_error) report.non_increasing = false;
  }
  return report;
}

nlohmann::ordered_json to_json(const ConvergenceReport& report) {
  Json doc;
  doc["version"] = kFormatVersion;
  doc["spec"] = to_json(report.spec);
  doc["architectures"] = Json::array();
  for (const auto& a : report.architectures) doc["architectures"].push_back(to_json(a));
  doc["grid"] = Json::array();
  for (std::size_t i = 0; i < report.grid.rows(); ++i) {
    const auto row = report.grid.row(i);
    doc["grid"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  doc["draws"] = report.draws;
  doc["replicates"] = report.replicates;
  doc["seed"] = report.seed;
  doc["widths"] = Json::array();
  for (const auto& w : report.widths) {
    Json entry;
    entry["width"] = w.width;
    entry["mean_error"] = w.mean_error;
    entry["sd_error"] = w.sd_error;
    entry["errors"] = w.errors;
    entry["elapsed_seconds"] = w.elapsed_seconds;
    doc["widths"].push_back(entry);
  }
  doc["non_increasing"] = report.non_increasing;
  return doc;
}

void write_convergence_csv(const ConvergenceReport& report, const std::string& path) {
  DenseMatrix table(report.widths.size(), 3);
  for (std::size_t i = 0; i < report.widths.size(); ++i) {
    const auto& w = report.widths[i];
    table(i, 0) = static_cast<double>(w.width);
    table(i, 1) = w.mean_error;
    table(i, 2) = w.sd_error;
  }
  write_matrix_csv(path, {"width", "mean_error", "sd_error"}, table);
}

void write_convergence_svg(const ConvergenceReport& report, const std::string& path) {
  SvgPlot plot;
  plot.title = "Prior covariance error vs width";
  plot.x_label = "log2(width)";
  plot.y_label = "relative Frobenius error";
  SvgSeries mean{"mean error", {}, {}, "#1f77b4", SeriesStyle::kLineWithMarkers};
  SvgBand band{"+/- 1 sd", {}, {}, {}, "#1f77b4"};
  for (const auto& w : report.widths) {
    const double lx = std::log2(static_cast<double>(w.width));
    mean.x.push_back(lx);
    mean.y.push_back(w.mean_error);
    band.x.push_back(lx);
    band.lower.push_back(std::max(0.0, w.mean_error - w.sd_error));
    band.upper.push_back(w.mean_error + w.sd_error);
  }
  plot.bands.push_back(std::move(band));
  plot.series.push_back(std::move(mean));
  write_svg(plot, path);
}

}  // namespace cmde
