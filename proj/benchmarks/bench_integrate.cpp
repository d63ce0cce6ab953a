#include <benchmark/benchmark.h>

#include "flowlab/coefficients.hpp"
#include "flowlab/integrate.hpp"

using namespace flowlab;

namespace {

TargetPtr wide_gaussian(int d) {
  return std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(d),
                                          4.0 * Eigen::MatrixXd::Identity(d, d),
                                          Eigen::MatrixXd::Identity(d, d));
}

void bm_euler_run(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int particles = static_cast<int>(state.range(1));
  VelocityField field(wide_gaussian(d), FlowKind::Follmer, EvalMode::ClosedForm);
  const Schedule schedule = uniform_schedule(64, 0.0);
  RunOptions opts{0};
  for (auto _ : state)
    benchmark::DoNotOptimize(euler_run(field, schedule, particles, 7, nullptr, opts).samples);
  state.SetItemsProcessed(state.iterations() * particles * 64);
}
BENCHMARK(bm_euler_run)->Args({2, 1024})->Args({32, 1024})->Unit(benchmark::kMillisecond);

void bm_base_constants(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  auto target = wide_gaussian(d);
  for (auto _ : state) benchmark::DoNotOptimize(compute_base_constants(*target).k5);
}
BENCHMARK(bm_base_constants)->Arg(2)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace
