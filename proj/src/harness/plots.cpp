#include <cmath>
#include <map>
#include <numbers>

#include "detail.hpp"
#include "phaseflow/harness/svg_plot.hpp"

namespace phaseflow::harness {

namespace {

std::filesystem::path svg_path(ExperimentKind kind, const std::filesystem::path& dir) {
  return dir / (std::string(kind_name(kind)) + ".svg");
}

// Rows grouped by the text of one column, in first-appearance order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_rows(const Table& t, std::string_view column) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto& key = t.at(r, column);
    auto [it, fresh] = index.emplace(key, groups.size());
    if (fresh) groups.push_back({key, {}});
    groups[it->second].second.push_back(r);
  }
  return groups;
}

Series series_from(const Table& t, const std::vector<std::size_t>& rows, std::string_view xcol,
                   std::string_view ycol, std::string label) {
  Series s;
  s.label = std::move(label);
  for (std::size_t r : rows) {
    s.x.push_back(t.number(r, xcol));
    s.y.push_back(t.number(r, ycol));
  }
  return s;
}

std::vector<std::size_t> all_rows(const Table& t) {
  std::vector<std::size_t> rows(t.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

void plot_tgamma(const std::filesystem::path& dir) {
  const auto t = Table::read(dir / "tgamma_summary.csv");
  LinePlot plot{"Stopping time T_gamma vs n", "n", "median T_gamma", {}, {}, false};
  const auto rows = all_rows(t);
  for (const auto& name : t.header()) {
    if (name.rfind("median_T_gamma_", 0) == 0) {
      auto s = series_from(t, rows, "n", name, "gamma = " + name.substr(15));
      s.markers = true;
      plot.series.push_back(std::move(s));
    }
  }
  auto ref = series_from(t, rows, "n", "log_reference", "c log n");
  ref.dashed = true;
  plot.series.push_back(std::move(ref));
  write_svg(plot, svg_path(ExperimentKind::tgamma_sweep, dir));
}

void plot_race(const std::filesystem::path& dir) {
  const auto t = Table::read(dir / "race_curves.csv");
  LinePlot plot{"RWF vs WF convergence (median over trials)", "iteration k", "dist / ||x||", {}, {}, true};
  for (const auto& [n, rows] : group_rows(t, "n")) {
    Table sub(t.header());
    for (std::size_t r : rows) sub.add_row(t.rows()[r]);
    for (const auto& [alg, alg_rows] : group_rows(sub, "algorithm")) {
      auto s = series_from(sub, alg_rows, "k", "median_dist_rel", alg + " n=" + n);
      s.dashed = alg == "wf";
      plot.series.push_back(std::move(s));
    }
  }
  write_svg(plot, svg_path(ExperimentKind::race, dir));
}

void plot_omega(const std::filesystem::path& dir) {
  const auto t = Table::read(dir / "omega.csv");
  LinePlot plot{"Angle omega_k during Phase 1", "iteration k", "omega_k", {}, {}, false};
  double kmax = 0.0;
  for (const auto& [trial, rows] : group_rows(t, "trial")) {
    plot.series.push_back(series_from(t, rows, "k", "omega", "trial " + trial));
    for (std::size_t r : rows) kmax = std::max(kmax, t.number(r, "k"));
  }
  Series top;
  top.label = "pi/2";
  top.x = {0.0, kmax};
  top.y = {std::numbers::pi / 2, std::numbers::pi / 2};
  top.dashed = true;
  plot.series.push_back(std::move(top));
  write_svg(plot, svg_path(ExperimentKind::omega_trace, dir));
}

void plot_timing(const std::filesystem::path& dir) {
  const auto t = Table::read(dir / "timing_times_summary.csv");
  LinePlot plot{"Wall time: spectral init vs random-init RWF", "n", "seconds (median)", {}, {}, true};
  const auto rows = all_rows(t);
  auto a = series_from(t, rows, "n", "median_spectral_seconds", "spectral init");
  auto b = series_from(t, rows, "n", "median_rwf_seconds", "RWF to dist 0.1");
  a.markers = b.markers = true;
  plot.series.push_back(std::move(a));
  plot.series.push_back(std::move(b));
  write_svg(plot, svg_path(ExperimentKind::timing, dir));
}

void plot_substages(const std::filesystem::path& dir) {
  const auto curves = Table::read(dir / "substages.csv");
  const auto marks = Table::read(dir / "substages_landmarks.csv");
  LinePlot plot{"Sub-stages of Phase 1 (first trial)", "iteration t", "value", {}, {}, false};
  const auto groups = group_rows(curves, "trial");
  if (!groups.empty()) {
    plot.series.push_back(series_from(curves, groups.front().second, "k", "alpha", "alpha_t"));
    plot.series.push_back(series_from(curves, groups.front().second, "k", "beta", "beta_t"));
  }
  if (marks.size() > 0) {
    for (const char* name : {"T_11", "T_1", "T_gamma2", "T_gamma"}) {
      const double v = marks.number(0, name);
      if (std::isfinite(v)) plot.vertical_markers.push_back({v, name});
    }
  }
  write_svg(plot, svg_path(ExperimentKind::substages, dir));
}

void plot_state_evolution(const std::filesystem::path& dir) {
  const auto curves = Table::read(dir / "state_evolution.csv");
  const auto emp = Table::read(dir / "state_evolution_empirical.csv");
  LinePlot plot{"State evolution of alpha", "step", "alpha", {}, {}, false};
  for (const auto& [curve, rows] : group_rows(curves, "curve")) {
    Table sub(curves.header());
    for (std::size_t r : rows) sub.add_row(curves.rows()[r]);
    for (const auto& [n, n_rows] : group_rows(sub, "n")) {
      auto s = series_from(sub, n_rows, "step", "alpha", curve + " n=" + n);
      s.dashed = curve != "clean";
      plot.series.push_back(std::move(s));
    }
  }
  const auto trials = group_rows(emp, "trial");
  if (!trials.empty()) {
    auto e = series_from(emp, trials.front().second, "k", "alpha_emp", "empirical");
    e.markers = true;
    auto r = series_from(emp, trials.front().second, "k", "alpha_rec", "recursion (same start)");
    r.dashed = true;
    plot.series.push_back(std::move(e));
    plot.series.push_back(std::move(r));
  }
  write_svg(plot, svg_path(ExperimentKind::state_evolution, dir));
}

}  // namespace

void replot(ExperimentKind kind, const std::filesystem::path& dir) {
  switch (kind) {
    case ExperimentKind::tgamma_sweep: plot_tgamma(dir); break;
    case ExperimentKind::race: plot_race(dir); break;
    case ExperimentKind::omega_trace: plot_omega(dir); break;
    case ExperimentKind::timing: plot_timing(dir); break;
    case ExperimentKind::substages: plot_substages(dir); break;
    case ExperimentKind::state_evolution: plot_state_evolution(dir); break;
    case ExperimentKind::lemma3_check: break;
  }
}

}  // namespace phaseflow::harness
