// Chunked OpenMP kernels against their serial references, plus the MC oracle.
#include <benchmark/benchmark.h>

#include <vector>

#include "phaseflow/analysis.hpp"
#include "phaseflow/ensemble.hpp"
#include "phaseflow/kernels.hpp"

using namespace phaseflow;

namespace {

std::vector<double> to_vector(const SignalVector& v) { return {v.values().begin(), v.values().end()}; }

struct Fixture {
  std::size_t n, m;
  MeasurementSet e;
  std::vector<double> z, w, out;
  Fixture(std::size_t n_, std::size_t ratio)
      : n(n_), m(ratio * n_), e(observe(generate_gaussian_ensemble(n, m, 1), random_unit_signal(n, 2))),
        z(to_vector(random_unit_signal(n, 3))),
        w(e.observations().begin(), e.observations().end()), out(n) {}
};

template <auto Kernel>
void residual(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 10);
  for (auto _ : state) {
    auto r = Kernel(f.e.matrix(), f.e.observations(), f.n, SampleRange{0, f.m}, f.z, f.out);
    benchmark::DoNotOptimize(r);
  }
  state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(f.m * f.n * sizeof(double)));
}

template <auto Kernel>
void gram_apply(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 10);
  for (auto _ : state) {
    Kernel(f.e.matrix(), f.w, f.n, SampleRange{0, f.m}, f.z, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(f.m * f.n * sizeof(double)));
}

template <auto Kernel>
void gram_matrix(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 10);
  std::vector<double> g(f.n * f.n);
  for (auto _ : state) {
    Kernel(f.e.matrix(), f.w, f.n, SampleRange{0, f.m}, g);
    benchmark::DoNotOptimize(g.data());
  }
}

void mc_oracle(benchmark::State& state) {
  const auto z = random_unit_signal(8, 4);
  const auto x = random_unit_signal(8, 5);
  for (auto _ : state) {
    auto est = mc_expectation_estimate(z.values(), x.values(), static_cast<std::size_t>(state.range(0)), 6);
    benchmark::DoNotOptimize(est.mean.data());
  }
}

}  // namespace

BENCHMARK(residual<kernels::reshaped_residual>)->Name("reshaped_residual/omp")->Arg(128)->Arg(512)->Arg(2000);
BENCHMARK(residual<kernels::serial::reshaped_residual>)->Name("reshaped_residual/serial")->Arg(128)->Arg(512)->Arg(2000);
BENCHMARK(residual<kernels::quartic_residual>)->Name("quartic_residual/omp")->Arg(128)->Arg(512)->Arg(2000);
BENCHMARK(residual<kernels::serial::quartic_residual>)->Name("quartic_residual/serial")->Arg(128)->Arg(512)->Arg(2000);
BENCHMARK(gram_apply<kernels::weighted_gram_apply>)->Name("gram_apply/omp")->Arg(512)->Arg(2000);
BENCHMARK(gram_apply<kernels::serial::weighted_gram_apply>)->Name("gram_apply/serial")->Arg(512)->Arg(2000);
BENCHMARK(gram_matrix<kernels::weighted_gram_matrix>)->Name("gram_matrix/blocked_syrk")->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(gram_matrix<kernels::serial::weighted_gram_matrix>)->Name("gram_matrix/serial")->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(mc_oracle)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
