#include <doctest.h>

#include <cstring>

#include "flowlab/coefficients.hpp"
#include "flowlab/integrate.hpp"
#include "flowlab/metrics.hpp"

using namespace flowlab;

namespace {

Eigen::MatrixXd ident(int d) { return Eigen::MatrixXd::Identity(d, d); }

TargetPtr bundled_mixture_1d() {
  std::vector<double> w{0.4, 0.6};
  std::vector<Eigen::VectorXd> means{-0.7 * Eigen::VectorXd::Ones(1),
                                     0.6 * Eigen::VectorXd::Ones(1)};
  std::vector<Eigen::MatrixXd> covs{0.75 * ident(1), 0.75 * ident(1)};
  return std::make_shared<MixtureTarget>(w, means, covs, ident(1));
}

}  // namespace

TEST_CASE("uniform schedules") {
  const Schedule s = uniform_schedule(4, 0.0);
  REQUIRE(s.t.size() == 5);
  CHECK(s.t[1] == doctest::Approx(0.25));
  CHECK(s.t[4] == 1.0);
  const Schedule stopped = uniform_schedule(10, 0.1);
  CHECK(stopped.t.back() == doctest::Approx(0.9));
  CHECK_THROWS_AS(uniform_schedule(0, 0.0), std::domain_error);
  CHECK_THROWS_AS(uniform_schedule(4, 1.0), std::domain_error);
}

TEST_CASE("geometric schedules end exactly at the stop time") {
  const Schedule s = geometric_schedule(8, 1.0 / 8, 0.0);
  CHECK(s.t[0] == 0.0);
  CHECK(s.t[1] == doctest::Approx(0.125));
  CHECK(s.t.back() == 1.0);
  for (int i = 2; i < 8; ++i)
    CHECK(s.t[i + 1] / s.t[i] == doctest::Approx(s.t[2] / s.t[1]).epsilon(1e-9));
}

TEST_CASE("the singular sum approaches pi/2 monotonically") {
  double prev = 0;
  for (int n : {100, 1000, 10000}) {
    const double sum = singular_schedule_sum(uniform_schedule(n, 0.0));
    CHECK(sum > prev);
    prev = sum;
  }
  CHECK(std::abs(prev - M_PI / 2) <= 0.02);
}

TEST_CASE("constant-velocity integration is exact; invariant target is a fixed point") {
  Eigen::VectorXd m(2);
  m << 1.0, -0.5;
  auto shifted = std::make_shared<GaussianTarget>(m, ident(2), ident(2));
  VelocityField field(shifted, FlowKind::Follmer, EvalMode::ClosedForm);
  const int n = 256;
  for (int steps : {1, 7, 64}) {
    const RunResult run = euler_run(field, uniform_schedule(steps, 0.0), n, 99);
    Eigen::MatrixXd initial = initial_normals(n, 2, 99);
    // C = I, so the initial batch is the raw normals
    const Eigen::MatrixXd expect = initial.rowwise() + m.transpose();
    CHECK((run.samples - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  auto invariant = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(2), 2.0 * ident(2),
                                                    2.0 * ident(2));
  VelocityField inv_field(invariant, FlowKind::Follmer, EvalMode::ClosedForm);
  const RunResult run = euler_run(inv_field, uniform_schedule(16, 0.0), n, 7);
  Eigen::MatrixXd initial = initial_normals(n, 2, 7);
  Eigen::LLT<Eigen::MatrixXd> llt(inv_field.initial_cov());
  initial = initial * Eigen::MatrixXd(llt.matrixL()).transpose();
  CHECK(std::memcmp(run.samples.data(), initial.data(), sizeof(double) * 2 * n) == 0);
}

TEST_CASE("runs are bit-identical across worker counts") {
  auto mix = bundled_mixture_1d();
  VelocityField field(mix, FlowKind::Follmer, EvalMode::ClosedForm);
  RunOptions one{1}, two{2};
  const RunResult r1 = euler_run(field, uniform_schedule(32, 0.0), 257, 5, nullptr, one);
  const RunResult r2 = euler_run(field, uniform_schedule(32, 0.0), 257, 5, nullptr, two);
  CHECK(std::memcmp(r1.samples.data(), r2.samples.data(), sizeof(double) * 257) == 0);
}

TEST_CASE("wide scalar gaussian reaches the target law at first order") {
  auto target = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(1), 4.0 * ident(1),
                                                 ident(1));
  VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
  const int n = 2048;
  const RunResult run = euler_run(field, uniform_schedule(2048, 0.0), n, 31);
  // coupled oracle: the exact map doubles the initial normals
  const Eigen::MatrixXd oracle = 2.0 * initial_normals(n, 1, 31);
  CHECK(w2_exact(run.samples, oracle).w2 < 0.08);

  // pushforward correctness at a fine grid: distance to the coupled oracle
  // sits far below the sampling floor
  const RunResult fine = euler_run(field, uniform_schedule(4096, 0.0), n, 31);
  const double floor = mc_floor(target->moments().m0, n, 2.0);
  CHECK(w2_exact(fine.samples, oracle).w2 < floor);
}

TEST_CASE("step refinement decays at first order") {
  auto target = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(1), 4.0 * ident(1),
                                                 ident(1));
  VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
  const int n = 1024;
  const Eigen::MatrixXd oracle = 2.0 * initial_normals(n, 1, 13);
  std::vector<double> log_h, log_w2;
  for (int steps : {32, 64, 128, 256, 512, 1024}) {
    const RunResult run = euler_run(field, uniform_schedule(steps, 0.0), n, 13);
    log_h.push_back(std::log(1.0 / steps));
    log_w2.push_back(std::log(w2_exact(run.samples, oracle).w2));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double cnt = log_h.size();
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    sx += log_h[i];
    sy += log_w2[i];
    sxx += log_h[i] * log_h[i];
    sxy += log_h[i] * log_w2[i];
  }
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  CHECK(slope >= 0.8);
  CHECK(slope <= 1.2);
}

TEST_CASE("exponential stepper: invariant target freezes after the mean push") {
  auto invariant = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(2), 2.0 * ident(2),
                                                    2.0 * ident(2));
  VelocityField field(invariant, FlowKind::Follmer, EvalMode::ClosedForm);
  const Schedule s = geometric_schedule(16, 0.05, 0.0);
  const RunResult run = exp_euler_prob_ode_run(field, s, 128, 3);
  Eigen::MatrixXd initial = initial_normals(128, 2, 3);
  Eigen::LLT<Eigen::MatrixXd> llt(field.initial_cov());
  initial = initial * Eigen::MatrixXd(llt.matrixL()).transpose();
  CHECK((run.samples - initial).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exponential stepper on a shared grid reproduces forward euler") {
  auto mix = bundled_mixture_1d();
  VelocityField field(mix, FlowKind::Follmer, EvalMode::ClosedForm);
  const Schedule s = uniform_schedule(32, 0.0);
  const RunResult euler = euler_run(field, s, 256, 11);
  const RunResult expo = exp_euler_prob_ode_run(field, s, 256, 11);
  // log-clock steps integrate the frozen-score linear part exactly, which on
  // a shared grid collapses to the forward-Euler update
  CHECK((euler.samples - expo.samples).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exponential and euler outputs approach each other as grids refine") {
  auto mix = bundled_mixture_1d();
  VelocityField field(mix, FlowKind::Follmer, EvalMode::ClosedForm);
  std::vector<double> gaps;
  for (int steps : {16, 64, 256}) {
    const RunResult euler = euler_run(field, uniform_schedule(steps, 0.0), 512, 21);
    const RunResult expo =
        exp_euler_prob_ode_run(field, geometric_schedule(steps, 1.0 / steps, 0.0), 512, 21);
    gaps.push_back(w2_exact(euler.samples, expo.samples).w2);
  }
  CHECK(gaps[1] < gaps[0]);
  CHECK(gaps[2] < gaps[1]);
}

TEST_CASE("exponential stepper rejects a grid that starts at zero log-time") {
  auto mix = bundled_mixture_1d();
  VelocityField field(mix, FlowKind::Follmer, EvalMode::ClosedForm);
  Schedule bad = uniform_schedule(4, 0.0);
  bad.t[1] = 0.0;
  CHECK_THROWS_AS(exp_euler_prob_ode_run(field, bad, 16, 1), std::domain_error);
}

TEST_CASE("random-field perturbation meets its declared size and budget") {
  auto mix = bundled_mixture_1d();
  const double eps = 0.02;
  const PerturbationModel model = PerturbationModel::random_field(1, eps, 99);
  const auto st = model.self_test(*mix, 8192, 17);
  CHECK(st.pass);
  CHECK(st.worst_rel_dev <= 0.02);

  // probed gradient stays under the declared budget line k8 * t
  const Eigen::MatrixXd probe = probe_ball(63, 1, 5.0);
  for (double t : {0.05, 0.3, 0.7, 1.0}) {
    for (int i = 0; i < probe.rows(); ++i) {
      const double gn = operator_norm(model.grad(t, probe.row(i).transpose()));
      CHECK(gn <= model.jacobian_budget() * t + 1e-12);
    }
  }
}

TEST_CASE("adversarial perturbation is exactly eps in size with zero budget") {
  const PerturbationModel model =
      PerturbationModel::adversarial(2, 0.03, Eigen::Vector2d(1.0, 0.0));
  for (double t : {0.0, 0.4, 1.0})
    CHECK(model.eval(t, Eigen::Vector2d(5.0, -2.0)).norm() == doctest::Approx(0.03));
  CHECK(model.jacobian_budget() == 0.0);
  auto mix = bundled_mixture_1d();
  const PerturbationModel m1 = PerturbationModel::adversarial(1, 0.02, Eigen::VectorXd::Ones(1));
  CHECK(m1.self_test(*mix, 2048, 3).pass);
}

TEST_CASE("perturbed integration aborts on non-finite velocity") {
  auto mix = bundled_mixture_1d();
  VelocityField field(mix, FlowKind::Follmer, EvalMode::ClosedForm);
  const PerturbationModel bad = PerturbationModel::adversarial(
      1, std::numeric_limits<double>::quiet_NaN(), Eigen::VectorXd::Ones(1));
  CHECK_THROWS_AS(euler_run(field, uniform_schedule(8, 0.0), 16, 1, &bad), NumericError);
}

TEST_CASE("flow-map displacement ratios") {
  Eigen::VectorXd m(1);
  m << 0.8;
  auto shifted = std::make_shared<GaussianTarget>(m, ident(1), ident(1));
  VelocityField translation(shifted, FlowKind::Follmer, EvalMode::ClosedForm);
  const auto unit = lipschitz_probe_run(translation, uniform_schedule(64, 0.0), 64, 1e-3, 2);
  CHECK(unit.estimate == doctest::Approx(1.0).epsilon(1e-9));

  auto wide = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(1), 4.0 * ident(1),
                                               ident(1));
  VelocityField doubling(wide, FlowKind::Follmer, EvalMode::ClosedForm);
  const auto twice = lipschitz_probe_run(doubling, uniform_schedule(1024, 0.0), 128, 1e-3, 2);
  CHECK(twice.estimate == doctest::Approx(2.0).epsilon(0.01));
  const CoefficientSet cs = compute_base_constants(*wide);
  CHECK(twice.estimate <= lipschitz_bounds(cs).flow);
  CHECK_THROWS_AS(lipschitz_probe_run(doubling, uniform_schedule(8, 0.0), 4, 0.0, 1),
                  std::domain_error);
}
