#include <doctest.h>

#include "flowlab/coefficients.hpp"
#include "flowlab/scorefield.hpp"

using namespace flowlab;

namespace {

Eigen::MatrixXd ident(int d) { return Eigen::MatrixXd::Identity(d, d); }

Eigen::MatrixXd rotation2(double angle) {
  Eigen::MatrixXd q(2, 2);
  q << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return q;
}

}  // namespace

TEST_CASE("identity pair with trivial remainder zeroes every constant") {
  GaussianTailTarget t(ident(3), ident(3));
  const CoefficientSet cs = compute_base_constants(t);
  CHECK(cs.k_sup == doctest::Approx(1.0));
  for (double v : {cs.k0, cs.k1, cs.k2, cs.k3, cs.k4, cs.k5, cs.k6, cs.k7, cs.k9})
    CHECK(v == 0.0);
  CHECK(cs.k9_identity_ok());
}

TEST_CASE("scalar maximizations for the 2:1 envelope") {
  GaussianTailTarget t(2.0 * ident(2), ident(2));
  const CoefficientSet cs = compute_base_constants(t);
  CHECK(cs.k_sup == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(cs.k_sup <= std::max(1.0, 2.0) + 1e-12);
  CHECK(cs.k2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cs.k4 == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(cs.k0 == 0.0);
  CHECK(cs.k1 == 0.0);
  CHECK(cs.k5 == doctest::Approx(cs.k2 + cs.k4));
}

TEST_CASE("eigenbasis scalars match a dense-matrix recomputation") {
  const Eigen::MatrixXd q = rotation2(0.9);
  const Eigen::MatrixXd a = q * Eigen::Vector2d(2.5, 0.6).asDiagonal() * q.transpose();
  const Eigen::MatrixXd c = q * Eigen::Vector2d(1.2, 0.9).asDiagonal() * q.transpose();
  SupNorms norms;
  norms.grad_h_sqrt_c = 0.4;
  norms.hess_h_c = 0.3;
  norms.grad_h = 0.4;
  norms.hess_h = 0.3;
  const CommutingPair pair = make_commuting_pair(a, c);
  const CoefficientSet cs = compute_base_constants(pair, norms);

  // Dense path: form the kernel matrices explicitly on the same grid.
  double k_sup = 0, k2 = 0, k3 = 0, k4 = 0, c1g = 0, c2g = 0;
  const int grid = 1001;
  const Eigen::MatrixXd identity = ident(2);
  for (int j = 0; j < grid; ++j) {
    const double t = static_cast<double>(j) / (grid - 1);
    const Eigen::MatrixXd abar = a * t * t + c * (1 - t * t);
    const Eigen::MatrixXd abar_inv = abar.inverse();
    k_sup = std::max(k_sup, operator_norm(a * abar_inv));
    k2 = std::max(k2, operator_norm((a - c) * abar_inv));
    k3 = std::max(k3, operator_norm(2 * a * (a - c) * abar_inv * abar_inv));
    k4 = std::max(k4, operator_norm(2 * c * (a - c) * abar_inv * abar_inv));
    // d/dt K = a (abar - 2 t^2 (a-c)) abar^{-2}; d/dt B = -2 a^2 t abar^{-2}
    c1g = std::max(c1g, operator_norm(a * (abar - 2 * t * t * (a - c)) * abar_inv * abar_inv));
    c2g = std::max(c2g, operator_norm(2 * t * a * a * abar_inv * abar_inv));
  }
  CHECK(cs.k_sup == doctest::Approx(k_sup).epsilon(1e-10));
  CHECK(cs.k2 == doctest::Approx(k2).epsilon(1e-10));
  CHECK(cs.k3 == doctest::Approx(k3).epsilon(1e-10));
  CHECK(cs.k4 == doctest::Approx(k4).epsilon(1e-10));
  CHECK(cs.c1_grid == doctest::Approx(c1g).epsilon(1e-10));
  CHECK(cs.c2_grid == doctest::Approx(c2g).epsilon(1e-10));
  CHECK(cs.k9_identity_ok());
}

TEST_CASE("larger remainder norms never shrink the derived constants") {
  const CommutingPair pair = make_commuting_pair(1.5 * ident(2), ident(2));
  SupNorms small, big;
  small.grad_h_sqrt_c = small.grad_h = 0.2;
  small.hess_h_c = small.hess_h = 0.1;
  big = small;
  big.grad_h_sqrt_c = big.grad_h = 0.5;
  const CoefficientSet lo = compute_base_constants(pair, small);
  const CoefficientSet hi = compute_base_constants(pair, big);
  CHECK(hi.k0 >= lo.k0);
  CHECK(hi.k1 >= lo.k1);
  CHECK(hi.k5 >= lo.k5);
  CHECK(hi.k6 >= lo.k6);
  CHECK(hi.k7 >= lo.k7);
}

TEST_CASE("early-stopping constants follow the closed forms") {
  const CoefficientSet half = compute_manifold_constants(1.0, 0.5);
  // sigma^2 = 1 - 0.25 = 0.75
  CHECK(half.k0 == doctest::Approx(1.0 / 0.75));
  CHECK(half.k1 == doctest::Approx(16.0 / 3.0));
  CHECK(half.k2 == doctest::Approx(1.0 / 0.75));
  CHECK(half.k9_identity_ok(1e-9));

  const CoefficientSet r2 = compute_manifold_constants(2.0, 0.5);
  CHECK(r2.k0 == doctest::Approx(2.0 / 0.75));

  // delta -> 1: the smoothing variance saturates at 1
  const CoefficientSet nearly = compute_manifold_constants(1.0, 1.0 - 1e-12);
  CHECK(nearly.k2 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(compute_manifold_constants(1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(compute_manifold_constants(-1.0, 0.5), std::domain_error);
}

TEST_CASE("posterior constants: vanishing and identity forward operators") {
  const int d = 2;
  {
    BayesPosteriorTarget t(ident(d),
                           BayesPosteriorTarget::constant_op(Eigen::VectorXd::Zero(d), d),
                           ident(d), Eigen::VectorXd::Zero(d));
    const CoefficientSet cs = compute_bayes_constants(t);
    CHECK(cs.k0 == 0.0);
  }
  {
    const double rho = 3.7;
    BayesPosteriorTarget t(ident(d), BayesPosteriorTarget::identity_op(d, rho), ident(d),
                           Eigen::VectorXd::Zero(d));
    const CoefficientSet cs = compute_bayes_constants(t);
    CHECK(cs.k0 == doctest::Approx(rho));
    // stored k9 equals its defining combination bit-for-bit
    const double recomputed = std::sqrt(1.0) * cs.k1 * M_PI + cs.k7;
    CHECK(cs.k9 == recomputed);
    CHECK(cs.k9_identity_ok(1e-12));
  }
}

TEST_CASE("theoretical bound: degenerate cases and functional form") {
  CoefficientSet zero;
  zero.k_sup = 1;
  CHECK(theoretical_w2_bound(zero, 0.5, 0.0, 4.0).value == 0.0);

  CoefficientSet cs;
  cs.k_sup = 1;
  cs.k1 = 0.3;
  cs.k2 = 0.2;
  cs.k5 = 1.7;
  cs.k9 = 0.9;
  const double m0 = 9.0;
  const BoundReport b1 = theoretical_w2_bound(cs, 0.5, 0.0, m0);
  const BoundReport b2 = theoretical_w2_bound(cs, 0.25, 0.0, m0);
  CHECK(b1.value == doctest::Approx(2 * b2.value).epsilon(1e-12));
  const BoundReport b0 = theoretical_w2_bound(cs, 0.0, 0.1, m0);
  CHECK(b0.value == doctest::Approx(std::exp((cs.k1 + cs.k2) / 2) * 0.2).epsilon(1e-12));

  // monotone in each argument
  CHECK(theoretical_w2_bound(cs, 0.6, 0.0, m0).value >= b1.value);
  CHECK(theoretical_w2_bound(cs, 0.5, 0.05, m0).value >= b1.value);
  CHECK(theoretical_w2_bound(cs, 0.5, 0.0, 2 * m0).value >= b1.value);
}

TEST_CASE("complexity estimate scalings and tightness") {
  CoefficientSet cs;
  cs.k_sup = 1;
  cs.k1 = 0.2;
  cs.k2 = 0.1;
  cs.k5 = 2.0;
  const double eps0 = 1e-3;
  const auto est = complexity_estimate(cs, 16.0, eps0);
  const auto est_double_m0 = complexity_estimate(cs, 32.0, eps0);
  const auto est_half_eps = complexity_estimate(cs, 16.0, eps0 / 2);
  CHECK(static_cast<double>(est_double_m0.steps) / est.steps ==
        doctest::Approx(std::sqrt(2.0)).epsilon(2e-3));
  CHECK(static_cast<double>(est_half_eps.steps) / est.steps == doctest::Approx(2.0).epsilon(2e-3));
  CHECK(theoretical_w2_bound(cs, 1.0 / est.steps, 0.0, 16.0).value <= eps0 * (1 + 1e-9));
  CHECK(theoretical_w2_bound(cs, 1.0 / (est.steps - 1), 0.0, 16.0).value > eps0);
  CHECK_THROWS_AS(complexity_estimate(cs, 16.0, 0.0), std::domain_error);
  // an additive k9 offset washes out as the moment proxy grows
  cs.k9 = 1.0;
  const auto big = complexity_estimate(cs, 1e6, eps0);
  const auto big2 = complexity_estimate(cs, 2e6, eps0);
  CHECK(static_cast<double>(big2.steps) / big.steps ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-2));
}

TEST_CASE("dimension proxy drives the step count like sqrt(d)") {
  CoefficientSet cs;
  cs.k_sup = 1;
  cs.k5 = 1.0;
  const auto n_d = complexity_estimate(cs, 64.0, 1e-3);
  const auto n_4d = complexity_estimate(cs, 256.0, 1e-3);
  CHECK(static_cast<double>(n_4d.steps) / n_d.steps == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("lipschitz bounds") {
  CoefficientSet cs;
  cs.k_sup = 1;
  const LipschitzBounds unit = lipschitz_bounds(cs);
  CHECK(unit.flow == 1.0);
  CHECK(unit.learned == 1.0);

  cs.k1 = 0.4;
  cs.k2 = 0.6;
  cs.k8 = 0.2;
  const LipschitzBounds b = lipschitz_bounds(cs);
  CHECK(b.flow == doctest::Approx(std::exp(0.5)));
  CHECK(b.learned == doctest::Approx(std::exp(0.6)));

  CHECK(gtail_special_lipschitz(1.0, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(gtail_special_lipschitz(4.0, 1.0, 1.0) == doctest::Approx(0.5 * std::exp(0.25)));
  CHECK_THROWS_AS(gtail_special_lipschitz(0.0, 1.0, 1.0), std::domain_error);
}

TEST_CASE("rectified constants cover the trivial-remainder growth bound") {
  auto target = std::make_shared<GaussianTailTarget>(ident(1), ident(1));
  const CoefficientSet cs = compute_rectified_constants(*target);
  CHECK(cs.k0 == 0.0);
  // |V(t,x)| = |x| |2t-1| / (t^2 + (1-t)^2) <= k2 |x|
  VelocityField field(target, FlowKind::Rectified, EvalMode::ClosedForm);
  for (double t : {0.05, 0.3, 0.5, 0.8, 1.0})
    for (double xv : {-3.0, 1.0, 5.0}) {
      Eigen::VectorXd x(1);
      x << xv;
      CHECK(field.velocity(t, x).norm() <= cs.k0 + cs.k2 * std::abs(xv) + 1e-10);
    }
  CHECK(cs.k9_identity_ok());
}
