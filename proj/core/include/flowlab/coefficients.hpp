#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowlab/targets.hpp"

namespace flowlab {

enum class CoefficientVariant { Base, Manifold, Bayes, Rectified };

// Dimension-free regularity and accumulation constants of a velocity field.
// k_sup is the kernel-gain supremum K; c1/c2 surface both the closed-form
// candidates and the numerically maximized time derivatives of the kernel
// factors (the larger is used).
struct CoefficientSet {
  CoefficientVariant variant = CoefficientVariant::Base;
  double k_sup = 0;
  double k0 = 0, k1 = 0, k2 = 0, k3 = 0, k4 = 0, k5 = 0, k6 = 0, k7 = 0, k9 = 0;
  double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
  double k8 = 0;  // learned-velocity regularity budget

  double c1_closed = std::numeric_limits<double>::quiet_NaN();
  double c1_grid = std::numeric_limits<double>::quiet_NaN();
  double c2_closed = std::numeric_limits<double>::quiet_NaN();
  double c2_grid = std::numeric_limits<double>::quiet_NaN();

  // manifold parameters (variant == Manifold)
  double diameter = 0;
  double delta = 0;

  bool k9_identity_ok(double tol = 1e-12) const;
  // Exponent of the flow-map Lipschitz bound (without the learned budget).
  double lipschitz_exponent() const;

  std::vector<std::pair<std::string, double>> entries() const;
};

CoefficientSet compute_base_constants(const CommutingPair& pair, const SupNorms& norms,
                                      int grid_points = 1001);
CoefficientSet compute_base_constants(const Target& target, int grid_points = 1001);

// Early-stopping constants for a compactly supported target of diameter R,
// stop parameter delta (reference covariance I).
CoefficientSet compute_manifold_constants(double diameter, double delta);

CoefficientSet compute_bayes_constants(const BayesPosteriorTarget& target);

// Constants of the straight-line interpolation flow, mirrored from the base
// construction on the kernel pair (A, I) with unweighted remainder norms.
CoefficientSet compute_rectified_constants(const Target& target, int grid_points = 1001);

struct BoundReport {
  double value = 0;  // theoretical W2 bound
  double step = 0;
  double eps = 0;
  double m0 = 0;
  double prefactor = 0;  // Lipschitz accumulation factor
  std::optional<double> empirical;
  std::optional<double> slack;  // value - empirical

  void attach_empirical(double w2) {
    empirical = w2;
    slack = value - w2;
  }
};

BoundReport theoretical_w2_bound(const CoefficientSet& coeffs, double h, double eps, double m0);

struct ComplexityEstimate {
  long steps = 0;
  double step_size = 0;
  double constant = 0;  // N ~ constant * sqrt(M0) / eps0
};

ComplexityEstimate complexity_estimate(const CoefficientSet& coeffs, double m0, double eps0);

struct LipschitzBounds {
  double flow = 1;     // continuous flow map
  double learned = 1;  // discrete flow with the learned budget
};

LipschitzBounds lipschitz_bounds(const CoefficientSet& coeffs);

// (1/sqrt(kappa)) exp((L^2 + L1) / (2 kappa))
double gtail_special_lipschitz(double kappa, double l, double l1);

}  // namespace flowlab
