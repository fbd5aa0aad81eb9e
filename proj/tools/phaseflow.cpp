// phaseflow: command-line driver for the phase retrieval experiments.

#include <cstdio>
#include <iostream>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "phaseflow/errors.hpp"
#include "phaseflow/harness/experiment.hpp"

namespace pf = phaseflow;
namespace hx = phaseflow::harness;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitParameter = 2;
constexpr int kExitDivergence = 3;

struct ExperimentCommand {
  hx::ExperimentSpec spec;
  std::vector<std::string> legs;
  std::string spectral;
  std::string out;
  CLI::App* app = nullptr;
};

void add_experiment_options(CLI::App& sub, ExperimentCommand& cmd) {
  auto& s = cmd.spec;
  sub.add_option("--n", s.dims, "Dimensions to sweep")->expected(1, -1);
  sub.add_option("--ratio", s.oversampling, "Oversampling ratio m/n")->capture_default_str();
  sub.add_option("--trials", s.trials, "Trials (repetitions for timing) per dimension")->capture_default_str();
  sub.add_option("--gamma", s.gamma, "Neighborhood radius gamma")->capture_default_str();
  sub.add_option("--gammas", s.gammas, "Radii reported by tgamma_sweep")->expected(1, -1);
  sub.add_option("--delta", s.delta, "Signal threshold for the T_1 landmark")->capture_default_str();
  sub.add_option("--mu", s.mu_rwf, "RWF step size")->capture_default_str();
  sub.add_option("--mu-wf", s.mu_wf, "WF step size")->capture_default_str();
  sub.add_option("--K", s.K, "Resampling blocks (0 = ceil(1.5 ln n))")->capture_default_str();
  sub.add_option("--seed", s.master_seed, "Master seed")->capture_default_str();
  sub.add_option("--out", cmd.out, "Output directory")->capture_default_str();
  sub.add_option("--max-iters", s.max_iters, "Iteration cap per run")->capture_default_str();
  sub.add_option("--tol", s.tol, "Relative distance tolerance")->capture_default_str();
  sub.add_option("--samples", s.samples, "Monte-Carlo samples per cell")->capture_default_str();
  sub.add_option("--legs", cmd.legs, "Algorithms raced, in order (rwf, wf)")->expected(1, -1);
  sub.add_option("--spectral", cmd.spectral, "Spectral method: dense or matrix_free")->capture_default_str();
  sub.add_option("--spectral-iters", s.spectral_iterations, "Power iteration cap")->capture_default_str();
  sub.add_option("--emp-n", s.emp_n, "Dimension of the empirical overlay")->capture_default_str();
  sub.add_option("--emp-m", s.emp_m, "Samples of the empirical overlay")->capture_default_str();
  sub.add_option("--perturb", s.perturb, "Perturbation ceiling for an extra recursion curve")->capture_default_str();
  sub.add_option("--init-draws", s.init_draws, "Draws for the initial-angle statistic")->capture_default_str();
  sub.add_option("--workers", s.workers, "Worker threads (default: PHASEFLOW_WORKERS or all cores)");
  sub.add_flag("--quiet", s.quiet, "Suppress the progress line");
}

pf::Algorithm parse_algorithm(const std::string& name) {
  if (name == "rwf") return pf::Algorithm::rwf;
  if (name == "wf") return pf::Algorithm::wf;
  throw pf::ParameterError("unknown algorithm '" + name + "' (expected rwf or wf)");
}

void finish_spec(ExperimentCommand& cmd) {
  auto& s = cmd.spec;
  if (!cmd.legs.empty()) {
    s.legs.clear();
    for (const auto& l : cmd.legs) s.legs.push_back(parse_algorithm(l));
  }
  if (cmd.spectral == "dense") {
    s.spectral_method = pf::SpectralMethod::dense;
  } else if (cmd.spectral == "matrix_free") {
    s.spectral_method = pf::SpectralMethod::matrix_free;
  } else {
    throw pf::ParameterError("unknown spectral method '" + cmd.spectral + "'");
  }
  s.output_dir = cmd.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reshaped Wirtinger flow experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("phaseflow ") + PHASEFLOW_VERSION);

  std::vector<ExperimentCommand> commands;
  commands.reserve(hx::all_kinds().size());
  for (auto kind : hx::all_kinds()) {
    ExperimentCommand cmd;
    cmd.spec = hx::default_spec(kind);
    cmd.spectral = cmd.spec.spectral_method == pf::SpectralMethod::dense ? "dense" : "matrix_free";
    cmd.out = "results/" + std::string(hx::kind_name(kind));
    commands.push_back(std::move(cmd));
  }
  for (auto& cmd : commands) {
    cmd.app = app.add_subcommand(std::string(hx::kind_name(cmd.spec.kind)),
                                 "Run the " + std::string(hx::kind_name(cmd.spec.kind)) + " experiment");
    add_experiment_options(*cmd.app, cmd);
  }

  hx::TraceRequest trace;
  trace.config.K = 0;
  std::string trace_algorithm = "rwf";
  std::string trace_out = "trace.csv";
  auto* trace_cmd = app.add_subcommand("trace", "Re-run one trial from its seed and write its iterate trace");
  trace_cmd->add_option("--n", trace.n, "Dimension")->capture_default_str();
  trace_cmd->add_option("--ratio", trace.oversampling, "Oversampling ratio m/n")->capture_default_str();
  trace_cmd->add_option("--seed", trace.seed, "Trial seed (from manifest.json)")->required();
  trace_cmd->add_option("--K", trace.config.K, "Resampling blocks (0 = ceil(1.5 ln n))")->capture_default_str();
  trace_cmd->add_option("--mu", trace.config.mu, "Step size")->capture_default_str();
  trace_cmd->add_option("--gamma", trace.config.gamma, "Neighborhood radius")->capture_default_str();
  trace_cmd->add_option("--tol", trace.config.tol, "Relative distance tolerance")->capture_default_str();
  trace_cmd->add_option("--max-iters", trace.config.max_iters, "Iteration cap")->capture_default_str();
  trace_cmd->add_option("--algorithm", trace_algorithm, "rwf or wf")->capture_default_str();
  trace_cmd->add_flag("--stop-at-gamma", trace.config.stop_at_gamma, "Stop at T_gamma");
  trace_cmd->add_option("--out", trace_out, "Output CSV path")->capture_default_str();

  std::string replot_kind;
  std::string replot_dir;
  auto* replot_cmd = app.add_subcommand("replot", "Redraw an experiment's SVG from its CSV files");
  replot_cmd->add_option("kind", replot_kind, "Experiment name")->required();
  replot_cmd->add_option("dir", replot_dir, "Directory holding the CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitParameter;
  }

  try {
    for (auto& cmd : commands) {
      if (!cmd.app->parsed()) continue;
      finish_spec(cmd);
      const std::size_t diverged = hx::run_experiment(cmd.spec);
      if (diverged > 0) {
        std::fprintf(stderr, "%zu trial(s) diverged; see the diverged column\n", diverged);
        return kExitDivergence;
      }
      return 0;
    }
    if (trace_cmd->parsed()) {
      trace.config.algorithm = parse_algorithm(trace_algorithm);
      if (trace.config.K == 0) trace.config.K = hx::auto_block_count(trace.n);
      try {
        const auto report = hx::rerun_trial(trace);
        std::ofstream out(trace_out, std::ios::binary);
        if (!out) throw pf::IoError("cannot open " + trace_out + " for writing");
        report.trace.write_csv(out);
        if (!out) throw pf::IoError("failed writing " + trace_out);
      } catch (const pf::DivergenceError& e) {
        std::ofstream out(trace_out, std::ios::binary);
        e.trace().write_csv(out);
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return kExitDivergence;
      }
      return 0;
    }
    if (replot_cmd->parsed()) {
      const auto kind = hx::parse_kind(replot_kind);
      if (!kind) throw pf::ParameterError("unknown experiment '" + replot_kind + "'");
      hx::replot(*kind, replot_dir);
      return 0;
    }
  } catch (const pf::ParameterError& e) {
    std::fprintf(stderr, "parameter error: %s\n", e.what());
    return kExitParameter;
  } catch (const pf::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const pf::StateError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitParameter;
  }
  return 0;
}
