#include <benchmark/benchmark.h>

#include "flowlab/scorefield.hpp"

using namespace flowlab;

namespace {

TargetPtr gaussian_target(int d) {
  Eigen::VectorXd diag(d);
  for (int i = 0; i < d; ++i) diag[i] = 2.0 + 2.0 * i / std::max(1, d - 1);
  return std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(d),
                                          Eigen::MatrixXd(diag.asDiagonal()),
                                          Eigen::MatrixXd::Identity(d, d));
}

TargetPtr mixture_target_2d() {
  std::vector<double> w{0.5, 0.5};
  std::vector<Eigen::VectorXd> means{Eigen::Vector2d(-0.55, 0.0), Eigen::Vector2d(0.55, 0.25)};
  std::vector<Eigen::MatrixXd> covs{0.85 * Eigen::MatrixXd::Identity(2, 2),
                                    0.85 * Eigen::MatrixXd::Identity(2, 2)};
  return std::make_shared<MixtureTarget>(w, means, covs, Eigen::MatrixXd::Identity(2, 2));
}

void bm_closed_form_velocity(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  VelocityField field(gaussian_target(d), FlowKind::Follmer, EvalMode::ClosedForm);
  const auto prep = field.prepare(0.5);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(d, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(prep.velocity(x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_closed_form_velocity)->Arg(2)->Arg(16)->Arg(128);

void bm_mixture_velocity(benchmark::State& state) {
  VelocityField field(mixture_target_2d(), FlowKind::Follmer, EvalMode::ClosedForm);
  const auto prep = field.prepare(0.5);
  Eigen::VectorXd x = Eigen::Vector2d(0.4, -0.2);
  for (auto _ : state) benchmark::DoNotOptimize(prep.velocity(x));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_mixture_velocity);

void bm_quadrature_velocity(benchmark::State& state) {
  QuadratureOptions opts;
  opts.budget = static_cast<int>(state.range(0));
  VelocityField field(mixture_target_2d(), FlowKind::Follmer, EvalMode::Quadrature, opts);
  Eigen::VectorXd x = Eigen::Vector2d(0.4, -0.2);
  const StreamHint hint{7, true};
  for (auto _ : state) benchmark::DoNotOptimize(field.velocity(0.5, x, hint));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_quadrature_velocity)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
