#include <doctest.h>

#include "flowlab/targets.hpp"

using namespace flowlab;

namespace {

Eigen::MatrixXd ident(int d) { return Eigen::MatrixXd::Identity(d, d); }

// Finite-difference gradient/Hessian oracles for h.
Eigen::VectorXd fd_grad(const Target& t, const Eigen::VectorXd& x, double eta = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += eta;
    xm[i] -= eta;
    g[i] = (t.h(xp) - t.h(xm)) / (2 * eta);
  }
  return g;
}

Eigen::MatrixXd fd_hess(const Target& t, const Eigen::VectorXd& x, double eta = 1e-5) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd h(d, d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += eta;
    xm[i] -= eta;
    h.col(i) = (t.grad_h(xp) - t.grad_h(xm)) / (2 * eta);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

TEST_CASE("log density of the plain Gaussian-envelope decomposition") {
  GaussianTailTarget t(ident(2), ident(2));
  CHECK(t.log_density(Eigen::Vector2d(0, 0)) == doctest::Approx(0.0));
  // |x| = 2 -> -2
  CHECK(t.log_density(Eigen::Vector2d(2, 0)) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(t.log_density(Eigen::Vector2d(std::nan(""), 0)), std::domain_error);
}

TEST_CASE("posterior log density is prior plus misfit") {
  const int d = 2;
  const Eigen::Vector2d y(0.7, -0.4);
  BayesPosteriorTarget t(ident(d), BayesPosteriorTarget::identity_op(d, 6.0), ident(d), y);
  for (double s : {0.3, -1.2}) {
    const Eigen::Vector2d x(s, 0.5 * s);
    const double expected = -0.5 * x.squaredNorm() - 0.5 * (x - y).squaredNorm();
    CHECK(t.log_density(x) == doctest::Approx(expected).epsilon(1e-12));
  }
  // conjugate posterior N(y/2, I/2)
  auto [mu, cov] = t.linear_posterior();
  CHECK((mu - 0.5 * y).norm() < 1e-12);
  CHECK((cov - 0.5 * ident(d)).norm() < 1e-12);
}

TEST_CASE("moments of standard families") {
  const int d = 5;
  GaussianTarget iso(Eigen::VectorXd::Zero(d), ident(d), ident(d));
  const MomentSummary m1 = iso.moments();
  CHECK(m1.m2 == doctest::Approx(d));
  CHECK(m1.tr_c == doctest::Approx(d));
  CHECK(m1.m0 == doctest::Approx(d));

  Eigen::VectorXd mean(2);
  mean << 1.0, -2.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 1.5, 0.2, 0.2, 0.7;
  GaussianTarget g(mean, cov, ident(2));
  CHECK(g.moments().m2 == doctest::Approx(mean.squaredNorm() + cov.trace()));

  auto ball = BoundedSupportTarget::uniform_ball(3, 1.0, 0.05);
  CHECK(ball->moments().m2 == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("monte carlo moments agree with closed forms") {
  auto ball = BoundedSupportTarget::uniform_ball(3, 1.0, 0.05);
  const MomentSummary mc = moments_mc(*ball, 1000000, 11);
  CHECK(std::abs(mc.m2 - 0.6) <= 4.0 * *mc.std_err);
  CHECK_THROWS_AS(moments_mc(*ball, 0, 1), ConfigError);

  std::vector<double> w{0.4, 0.6};
  std::vector<Eigen::VectorXd> means{-0.7 * Eigen::VectorXd::Ones(1),
                                     0.6 * Eigen::VectorXd::Ones(1)};
  std::vector<Eigen::MatrixXd> covs{0.75 * ident(1), 0.75 * ident(1)};
  MixtureTarget mix(w, means, covs, ident(1));
  const MomentSummary mc_mix = moments_mc(mix, 1000000, 12);
  CHECK(std::abs(mc_mix.m2 - mix.moments().m2) <= 4.0 * *mc_mix.std_err);
}

TEST_CASE("mixture sampling: symmetry, determinism, normalization") {
  std::vector<double> w{0.5, 0.5};
  std::vector<Eigen::VectorXd> means{-2.0 * Eigen::VectorXd::Ones(1), 2.0 * Eigen::VectorXd::Ones(1)};
  std::vector<Eigen::MatrixXd> covs{0.25 * ident(1), 0.25 * ident(1)};
  MixtureTarget mix(w, means, covs, ident(1));

  const int n = 100000;
  const Eigen::MatrixXd xs = mix.sample(n, 77);
  const double sigma = std::sqrt(mix.moments().m2);
  CHECK(std::abs(xs.col(0).mean()) <= 3.0 * sigma / std::sqrt(double(n)));

  const Eigen::MatrixXd again = mix.sample(n, 77);
  CHECK((xs - again).norm() == 0.0);

  // exp(log_density) integrates to 1 within 1% (dense 1D quadrature)
  const int grid = 4001;
  const double lo = -8, hi = 8, dx = (hi - lo) / (grid - 1);
  double integral = 0;
  for (int i = 0; i < grid; ++i) {
    Eigen::VectorXd x(1);
    x[0] = lo + i * dx;
    const double wgt = (i == 0 || i == grid - 1) ? 0.5 : 1.0;
    integral += wgt * std::exp(mix.log_density(x)) * dx;
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("planar mixture density integrates to one") {
  std::vector<double> w{0.5, 0.5};
  std::vector<Eigen::VectorXd> means{Eigen::Vector2d(-0.55, 0.0), Eigen::Vector2d(0.55, 0.25)};
  std::vector<Eigen::MatrixXd> covs{0.85 * ident(2), 0.85 * ident(2)};
  MixtureTarget mix(w, means, covs, ident(2));
  const int grid = 161;
  const double lo = -7, hi = 7, dx = (hi - lo) / (grid - 1);
  double integral = 0;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const double wi = (i == 0 || i == grid - 1) ? 0.5 : 1.0;
      const double wj = (j == 0 || j == grid - 1) ? 0.5 : 1.0;
      integral += wi * wj * std::exp(mix.log_density(Eigen::Vector2d(lo + i * dx, lo + j * dx))) *
                  dx * dx;
    }
  CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("atom target degenerate sampling") {
  Eigen::MatrixXd pts(1, 3);
  pts << 0.3, -0.7, 1.1;
  auto atoms = BoundedSupportTarget::atoms(pts, Eigen::VectorXd::Ones(1), 0.05);
  const Eigen::MatrixXd xs = atoms->sample(5, 9);
  for (int i = 0; i < 5; ++i) CHECK((xs.row(i) - pts.row(0)).norm() == 0.0);
  CHECK(atoms->diameter() == 0.0);
}

TEST_CASE("atoms diameter and early-stop validation") {
  Eigen::MatrixXd pts(2, 2);
  pts << 1, 0, -1, 0;
  auto atoms = BoundedSupportTarget::atoms(pts, Eigen::VectorXd::Ones(2), 0.1);
  CHECK(atoms->diameter() == doctest::Approx(2.0));
  CHECK_THROWS_AS(BoundedSupportTarget::atoms(pts, Eigen::VectorXd::Ones(2), 0.0),
                  std::domain_error);
}

TEST_CASE("mixture h-oracles match finite differences") {
  std::vector<double> w{0.4, 0.6};
  std::vector<Eigen::VectorXd> means{Eigen::Vector2d(-0.7, 0.1), Eigen::Vector2d(0.8, -0.2)};
  std::vector<Eigen::MatrixXd> covs{0.75 * ident(2), 0.75 * ident(2)};
  MixtureTarget mix(w, means, covs, ident(2));
  for (double s : {-1.3, 0.2, 0.9}) {
    const Eigen::Vector2d x(s, -0.4 * s);
    CHECK((mix.grad_h(x) - fd_grad(mix, x)).norm() < 1e-6);
    CHECK((mix.hess_h(x) - fd_hess(mix, x)).norm() < 1e-5);
  }
}

TEST_CASE("bayes tanh h-oracles match finite differences") {
  const int d = 2;
  BayesPosteriorTarget t(ident(d), BayesPosteriorTarget::tanh_op(d), ident(d),
                         Eigen::Vector2d(0.5, -0.3));
  for (double s : {-0.9, 0.3, 1.4}) {
    const Eigen::Vector2d x(s, 0.6 * s);
    CHECK((t.grad_h(x) - fd_grad(t, x)).norm() < 1e-6);
    CHECK((t.hess_h(x) - fd_hess(t, x)).norm() < 1e-5);
  }
}

TEST_CASE("assumption validation: trivial remainder, tanh posterior, negative control") {
  GaussianTailTarget trivial(ident(2), ident(2));
  const AssumptionReport ok = validate_assumptions(trivial);
  CHECK(ok.pass);
  CHECK(ok.probed_grad_sqrt_c == 0.0);
  CHECK(ok.probed_hess_c == 0.0);

  BayesPosteriorTarget tanh_t(ident(2), BayesPosteriorTarget::tanh_op(2), ident(2),
                              Eigen::Vector2d(0.5, -0.3));
  const AssumptionReport bayes = validate_assumptions(tanh_t);
  CHECK(bayes.pass);
  CHECK(std::isfinite(bayes.probed_hess_c));

  // wrong cached sup-norms (claimed zero) with a genuinely nonzero remainder
  GaussianTailTarget::Oracles oracles;
  oracles.value = [](const Eigen::VectorXd& x) { return std::sin(x[0]); };
  oracles.grad = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    g[0] = std::cos(x[0]);
    return g;
  };
  oracles.hess = [](const Eigen::VectorXd& x) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.size(), x.size());
    h(0, 0) = -std::sin(x[0]);
    return h;
  };
  SupNorms wrong;  // all zeros
  GaussianTailTarget control(ident(2), 2.0 * ident(2), oracles, wrong);
  const AssumptionReport bad = validate_assumptions(control);
  CHECK_FALSE(bad.pass);
  CHECK(bad.worst_point.size() == 2);
  CHECK_THROWS_AS(validate_assumptions(control, AssumptionProbeSpec{0, 0.0, 1e-10}),
                  ConfigError);
}

TEST_CASE("gaussian family refuses nonsense") {
  CHECK_THROWS_AS(GaussianTarget(Eigen::VectorXd::Zero(2),
                                 Eigen::Vector2d(1.0, -1.0).asDiagonal(), ident(2)),
                  std::domain_error);
  GaussianTailTarget trivial(ident(2), ident(2));
  CHECK_THROWS_AS(trivial.log_density(Eigen::Vector2d(1.0, std::nan(""))), std::domain_error);
}

TEST_CASE("grid-inversion sampler matches the grid oracle (tanh posterior)") {
  const int d = 2;
  BayesPosteriorTarget t(ident(d), BayesPosteriorTarget::tanh_op(d), ident(d),
                         Eigen::Vector2d(0.8, -0.5));
  const auto oracle = t.grid_posterior_oracle(201);
  const Eigen::MatrixXd xs = t.sample(20000, 5);
  const Eigen::VectorXd mean = xs.colwise().mean().transpose();
  const double floor = 3.0 * std::sqrt(oracle.cov.trace() / xs.rows());
  CHECK((mean - oracle.mean).norm() <= floor + 0.01);
}
