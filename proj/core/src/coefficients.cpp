#include "flowlab/coefficients.hpp"

#include <cmath>

namespace flowlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double grid_t(int j, int n) { return static_cast<double>(j) / (n - 1); }

}  // namespace

bool CoefficientSet::k9_identity_ok(double tol) const {
  return std::abs(k9 - (k6 * kPi / 4.0 + k7)) <= tol * std::max(1.0, std::abs(k9));
}

double CoefficientSet::lipschitz_exponent() const {
  // Interpolation-flow gradient bound is k1 t + k2, everything else k-linear
  // in t with slope k1 + k2.
  if (variant == CoefficientVariant::Rectified) return 0.5 * k1 + k2;
  return 0.5 * (k1 + k2);
}

std::vector<std::pair<std::string, double>> CoefficientSet::entries() const {
  std::vector<std::pair<std::string, double>> e = {
      {"K", k_sup}, {"K0", k0}, {"K1", k1}, {"K2", k2}, {"K3", k3},
      {"K4", k4},   {"K5", k5}, {"K6", k6}, {"K7", k7}, {"K8", k8},
      {"K9", k9},   {"C1", c1}, {"C2", c2}, {"C3", c3}, {"C4", c4},
  };
  if (std::isfinite(c1_closed)) e.push_back({"C1_closed_form", c1_closed});
  if (std::isfinite(c1_grid)) e.push_back({"C1_grid", c1_grid});
  if (std::isfinite(c2_closed)) e.push_back({"C2_closed_form", c2_closed});
  if (std::isfinite(c2_grid)) e.push_back({"C2_grid", c2_grid});
  if (variant == CoefficientVariant::Manifold) {
    e.push_back({"R", diameter});
    e.push_back({"delta", delta});
  }
  return e;
}

CoefficientSet compute_base_constants(const CommutingPair& pair, const SupNorms& norms,
                                      int grid_points) {
  CoefficientSet cs;
  cs.variant = CoefficientVariant::Base;
  const int d = pair.dim();
  const double norm_a = pair.a.maxCoeff();
  const double norm_c = pair.c.maxCoeff();
  const double norm_ac = (pair.a.array() - pair.c.array()).abs().maxCoeff();
  const double norm_a2c = (pair.a.array() - 2 * pair.c.array()).abs().maxCoeff();

  double c1_grid = 0, c2_grid = 0;
  for (int j = 0; j < grid_points; ++j) {
    const double t = grid_t(j, grid_points);
    for (int i = 0; i < d; ++i) {
      const double a = pair.a[i], c = pair.c[i];
      const double abar = c + (a - c) * t * t;
      cs.k_sup = std::max(cs.k_sup, a / abar);
      cs.k2 = std::max(cs.k2, std::abs(a - c) / abar);
      cs.k3 = std::max(cs.k3, 2 * a * std::abs(a - c) / (abar * abar));
      cs.k4 = std::max(cs.k4, 2 * c * std::abs(a - c) / (abar * abar));
      c1_grid = std::max(c1_grid, std::abs(a * (c - (a - c) * t * t)) / (abar * abar));
      c2_grid = std::max(c2_grid, 2 * a * a * t / (abar * abar));
    }
  }
  cs.c1_grid = c1_grid;
  cs.c2_grid = c2_grid;

  // Closed-form candidates; only meaningful with a nonzero Hessian bound.
  double c1_closed = -1, c2_closed = -1;
  if (norms.hess_h > 0) {
    const double q = 1.0 / (2.0 * norm_c * norms.hess_h);
    if (q < 1.0) {
      const double den = norm_c + norm_ac * (1 - q);
      const double e1 =
          norm_a * (pair.a.array() * (1 - q) - pair.c.array() * (1 - q) - pair.c.array())
                       .abs()
                       .maxCoeff() /
          (den * den);
      c1_closed = std::max({e1, norm_a2c / norm_a, norm_a / (8 * norm_c)});
      double c2e = std::max(2.0, 2 * norm_a * norm_a * std::sqrt(1 - q) / (den * den));
      if (norm_ac > 0)
        c2e = std::max(c2e, 9 * norm_a * norm_a / (8 * norm_c * norm_c) *
                                std::sqrt(norm_c / (3 * norm_ac)));
      c2_closed = c2e;
    }
  }
  if (c1_closed >= 0) cs.c1_closed = c1_closed;
  if (c2_closed >= 0) cs.c2_closed = c2_closed;
  cs.c1 = std::max(c1_grid, c1_closed);
  cs.c2 = std::max(c2_grid, c2_closed);

  cs.k0 = cs.k_sup * std::sqrt(norm_c) * norms.grad_h_sqrt_c;
  cs.k1 = cs.k_sup * cs.k_sup *
          (norms.hess_h_c + norms.grad_h_sqrt_c * norms.grad_h_sqrt_c);
  cs.k5 = std::max(3 * cs.k1 * cs.c1, 2 * (1 + std::sqrt(2.0)) * cs.k0 * std::sqrt(cs.k1) * cs.c1) +
          cs.k2 + cs.k4;
  cs.k6 = 2 * cs.k1 / cs.k_sup * std::sqrt(norm_c) * cs.c2;
  cs.c3 = 2 * cs.k1 * cs.c2 * (std::sqrt(cs.k1) + cs.k0);
  const double sqrt6 = std::sqrt(6.0), sqrt2 = std::sqrt(2.0), sqrt3 = std::sqrt(3.0);
  cs.c4 = 2 * sqrt3 * cs.k0 * cs.k1 * cs.c2 + 0.5 * std::pow(cs.k0, 1.5) * std::sqrt(cs.k1) * cs.c2 +
          (1 + sqrt6) * (1 + sqrt6) / (4 * (1 + sqrt2)) * cs.k0 * cs.k0 * std::sqrt(cs.k1) * cs.c2;
  cs.k7 = std::max(cs.c3, cs.c4) + cs.k0 * cs.k3 / cs.k_sup;
  cs.k9 = cs.k6 * kPi / 4.0 + cs.k7;
  return cs;
}

CoefficientSet compute_base_constants(const Target& target, int grid_points) {
  return compute_base_constants(target.basis(), target.sup_norms(), grid_points);
}

CoefficientSet compute_manifold_constants(double diameter, double delta) {
  if (!(diameter > 0)) throw std::domain_error("manifold constants: diameter must be positive");
  if (!(delta > 0) || delta >= 1)
    throw std::domain_error("manifold constants: delta must lie in (0,1)");
  const double r = diameter;
  const double s2 = 1.0 - (1.0 - delta) * (1.0 - delta);
  const double hess = 2.0 * r * r / (s2 * s2);
  const double q = 1.0 / (2.0 * hess);
  const double one_md2 = (1.0 - delta) * (1.0 - delta);

  CoefficientSet cs;
  cs.variant = CoefficientVariant::Manifold;
  cs.diameter = r;
  cs.delta = delta;
  cs.k_sup = 1.0;
  cs.k0 = r / s2;
  cs.k1 = 3.0 * (r / s2) * (r / s2);
  cs.k2 = 1.0 / s2;
  cs.k3 = 2.0 / s2;
  cs.k4 = 2.0 / (s2 * s2);

  {
    const double den = 1.0 + one_md2 * (1 - q);
    const double e1 = s2 * std::abs(one_md2 * (1 - q) - 1.0) / (den * den);
    const double e2 = (one_md2 + 1.0) / s2;
    const double e3 = s2 / 8.0;
    cs.c1 = std::max({e1, e2, e3});
    double c2 = 2.0;
    if (q < 1.0) c2 = std::max(c2, 2.0 * s2 * s2 * std::sqrt(1 - q) / (den * den));
    c2 = std::max(c2, 9.0 * s2 * s2 / (8.0 * std::sqrt(3.0) * (1.0 - delta)));
    cs.c2 = c2;
  }

  cs.k5 = 9.0 * cs.c1 * r * r / (s2 * s2) + 2.0 / (s2 * s2) + 1.0 / s2;
  cs.k6 = 6.0 * cs.c2 * r * r / (s2 * s2);
  const double sqrt3 = std::sqrt(3.0);
  cs.k7 = 6.0 * (sqrt3 + 1.0) * std::pow(r / s2, 3.0) * cs.c2 + 2.0 * r / (s2 * s2);
  cs.k9 = 1.5 * kPi * cs.c2 * r * r / (s2 * s2) +
          6.0 * (sqrt3 + 1.0) * cs.c2 * std::pow(r, 3.0) / std::pow(s2, 3.0) +
          2.0 * r / (s2 * s2);
  cs.c3 = 2 * cs.k1 * cs.c2 * (std::sqrt(cs.k1) + cs.k0);
  const double sqrt6 = std::sqrt(6.0), sqrt2 = std::sqrt(2.0);
  cs.c4 = 2 * sqrt3 * cs.k0 * cs.k1 * cs.c2 + 0.5 * std::pow(cs.k0, 1.5) * std::sqrt(cs.k1) * cs.c2 +
          (1 + sqrt6) * (1 + sqrt6) / (4 * (1 + sqrt2)) * cs.k0 * cs.k0 * std::sqrt(cs.k1) * cs.c2;
  return cs;
}

CoefficientSet compute_bayes_constants(const BayesPosteriorTarget& target) {
  const auto& op = target.op();
  if (!std::isfinite(op.sup_value) || !std::isfinite(op.sup_jac) || !std::isfinite(op.sup_hess) ||
      op.sup_value < 0 || op.sup_jac < 0 || op.sup_hess < 0)
    throw ConfigError("bayes constants: forward-operator sup-norms are missing");
  const double norm_c = operator_norm(target.reference_cov());
  Eigen::LLT<Eigen::MatrixXd> llt(target.noise_cov());
  const Eigen::MatrixXd sigma_inv = llt.solve(
      Eigen::MatrixXd::Identity(target.noise_cov().rows(), target.noise_cov().cols()));
  const double ns = operator_norm(sigma_inv);
  const double misfit = op.sup_value + target.observation().norm();

  CoefficientSet cs;
  cs.variant = CoefficientVariant::Bayes;
  // Envelope equals the prior covariance, so the kernel gain is 1 and the
  // kernel time-derivative extrema are 1 and 2.
  cs.k_sup = 1.0;
  cs.c1 = 1.0;
  cs.c2 = 2.0;
  cs.k0 = norm_c * ns * op.sup_jac * misfit;
  cs.k1 = norm_c * (ns * (op.sup_jac * op.sup_jac + misfit * op.sup_hess) +
                    ns * ns * op.sup_jac * op.sup_jac * misfit * misfit);
  cs.k5 = std::max(3 * cs.k1, 2 * (1 + std::sqrt(2.0)) * cs.k0 * std::sqrt(cs.k1));
  cs.k6 = 4 * std::sqrt(norm_c) * cs.k1;
  cs.c3 = 4 * cs.k1 * (std::sqrt(cs.k1) + cs.k0);
  const double sqrt6 = std::sqrt(6.0), sqrt2 = std::sqrt(2.0), sqrt3 = std::sqrt(3.0);
  cs.c4 = 4 * sqrt3 * cs.k0 * cs.k1 + std::pow(cs.k0, 1.5) * std::sqrt(cs.k1) +
          (1 + sqrt6) * (1 + sqrt6) / (2 * (1 + sqrt2)) * cs.k0 * cs.k0 * std::sqrt(cs.k1);
  cs.k7 = std::max(cs.c3, cs.c4);
  cs.k9 = std::sqrt(norm_c) * cs.k1 * kPi + cs.k7;
  return cs;
}

double gtail_special_lipschitz(double kappa, double l, double l1) {
  if (!(kappa > 0)) throw std::domain_error("gtail lipschitz: kappa must be positive");
  return std::exp((l * l + l1) / (2 * kappa)) / std::sqrt(kappa);
}

CoefficientSet compute_rectified_constants(const Target& target, int grid_points) {
  const int d = target.dim();
  const CommutingPair pair =
      make_commuting_pair(target.envelope(), Eigen::MatrixXd::Identity(d, d));
  const SupNorms norms = target.sup_norms();

  CoefficientSet cs;
  cs.variant = CoefficientVariant::Rectified;
  double c1 = 0, c2 = 0, lhat = 0, m3 = 0;
  for (int j = 0; j < grid_points; ++j) {
    const double t = grid_t(j, grid_points);
    for (int i = 0; i < d; ++i) {
      const double a = pair.a[i];
      const double ahat = a * t * t + (1 - t) * (1 - t);
      const double dahat = 2 * ((a + 1) * t - 1);
      cs.k_sup = std::max(cs.k_sup, a / ahat);
      cs.k2 = std::max(cs.k2, std::abs((a + 1) * t - 1) / ahat);
      // d/dt K(t), d/dt B(t), d/dt of the linear part, d/dt (A Ahat^{-1})
      const double dk = a * (ahat - t * dahat) / (ahat * ahat);
      const double db = a * (-2 * (1 - t) * ahat - (1 - t) * (1 - t) * dahat) / (ahat * ahat);
      const double dl = ((a + 1) * ahat - ((a + 1) * t - 1) * dahat) / (ahat * ahat);
      c1 = std::max(c1, std::abs(dk));
      c2 = std::max(c2, std::abs(db));
      lhat = std::max(lhat, std::abs(dl));
      m3 = std::max(m3, a * std::abs(dahat) / (ahat * ahat));
    }
  }
  cs.c1 = cs.c1_grid = c1;
  cs.c2 = cs.c2_grid = c2;
  cs.k0 = cs.k_sup * norms.grad_h;
  cs.k1 = cs.k_sup * cs.k_sup * (norms.hess_h + norms.grad_h * norms.grad_h);
  cs.k3 = m3;
  cs.k4 = lhat;
  cs.k5 = std::max(3 * cs.k1 * cs.c1, 2 * (1 + std::sqrt(2.0)) * cs.k0 * std::sqrt(cs.k1) * cs.c1) +
          lhat;
  cs.k6 = 2 * cs.k1 / cs.k_sup * cs.c2;
  cs.c3 = 2 * cs.k1 * cs.c2 * (std::sqrt(cs.k1) + cs.k0);
  const double sqrt6 = std::sqrt(6.0), sqrt2 = std::sqrt(2.0), sqrt3 = std::sqrt(3.0);
  cs.c4 = 2 * sqrt3 * cs.k0 * cs.k1 * cs.c2 + 0.5 * std::pow(cs.k0, 1.5) * std::sqrt(cs.k1) * cs.c2 +
          (1 + sqrt6) * (1 + sqrt6) / (4 * (1 + sqrt2)) * cs.k0 * cs.k0 * std::sqrt(cs.k1) * cs.c2;
  cs.k7 = std::max(cs.c3, cs.c4) + cs.k0 * cs.k3 / cs.k_sup;
  cs.k9 = cs.k6 * kPi / 4.0 + cs.k7;
  return cs;
}

BoundReport theoretical_w2_bound(const CoefficientSet& coeffs, double h, double eps, double m0) {
  if (!(h >= 0) || h > 1) throw std::domain_error("theoretical_w2_bound: h outside [0,1]");
  if (eps < 0) throw std::domain_error("theoretical_w2_bound: eps must be nonnegative");
  BoundReport report;
  report.step = h;
  report.eps = eps;
  report.m0 = m0;
  double exponent;
  if (coeffs.variant == CoefficientVariant::Manifold) {
    const double r = coeffs.diameter, delta = coeffs.delta;
    exponent = 3 * r * r / (2 * delta * delta) + 1 / (2 * delta) + coeffs.k8 / 2;
  } else {
    exponent = coeffs.lipschitz_exponent() + coeffs.k8 / 2;
  }
  report.prefactor = std::exp(exponent);
  report.value = report.prefactor *
                 (std::sqrt(3.0) * (coeffs.k5 * std::sqrt(m0) + coeffs.k9) * h + 2 * eps);
  return report;
}

ComplexityEstimate complexity_estimate(const CoefficientSet& coeffs, double m0, double eps0) {
  if (!(eps0 > 0)) throw std::domain_error("complexity_estimate: eps0 must be positive");
  ComplexityEstimate est;
  const double prefactor = theoretical_w2_bound(coeffs, 0.0, 0.0, m0).prefactor;
  est.constant = prefactor * std::sqrt(3.0) * (coeffs.k5 + coeffs.k9 / std::sqrt(m0));
  est.steps = static_cast<long>(std::ceil(est.constant * std::sqrt(m0) / eps0));
  est.steps = std::max(est.steps, 1L);
  while (theoretical_w2_bound(coeffs, 1.0 / static_cast<double>(est.steps), 0.0, m0).value >
         eps0 * (1 + 1e-12))
    ++est.steps;
  est.step_size = 1.0 / static_cast<double>(est.steps);
  return est;
}

LipschitzBounds lipschitz_bounds(const CoefficientSet& coeffs) {
  LipschitzBounds b;
  b.flow = std::exp(coeffs.lipschitz_exponent());
  b.learned = std::exp(coeffs.lipschitz_exponent() + coeffs.k8 / 2);
  return b;
}

}  // namespace flowlab
