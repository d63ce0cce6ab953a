#include <benchmark/benchmark.h>

#include "flowlab/metrics.hpp"

using namespace flowlab;

namespace {

void bm_w2_exact(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = standard_normal_matrix(n, 2, 1, StreamPurpose::Generic);
  Eigen::MatrixXd b = standard_normal_matrix(n, 2, 2, StreamPurpose::Generic);
  b.col(0).array() += 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(w2_exact(a, b, 1).w2);
  state.SetComplexityN(n);
}
BENCHMARK(bm_w2_exact)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond)->Complexity();

void bm_sliced_w2(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = standard_normal_matrix(n, 8, 3, StreamPurpose::Generic);
  Eigen::MatrixXd b = standard_normal_matrix(n, 8, 4, StreamPurpose::Generic);
  b.col(0).array() += 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(sliced_w2(a, b, 64, 5).value);
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_sliced_w2)->Arg(4096)->Arg(16384)->Unit(benchmark::kMillisecond);

void bm_gaussian_closed_form(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Eigen::MatrixXd s1 = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s2 = 2.25 * Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd m = Eigen::VectorXd::Ones(d);
  for (auto _ : state)
    benchmark::DoNotOptimize(w2_gaussian_closed_form(Eigen::VectorXd::Zero(d), s1, m, s2));
}
BENCHMARK(bm_gaussian_closed_form)->Arg(8)->Arg(64);

}  // namespace
