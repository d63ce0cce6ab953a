#pragma once

#include <string>
#include <vector>

#include "flowlab/coefficients.hpp"
#include "flowlab/integrate.hpp"

namespace flowlab {

inline constexpr int kExactAssignmentCap = 4096;

struct TransportPlanResult {
  double cost = 0;                // total squared-distance cost
  std::vector<int> assignment;    // row of a -> row of b
  double w2 = 0;                  // sqrt(cost / n)
};

// Exact empirical W2: solves the square assignment problem with
// squared-Euclidean costs by dual-updating shortest augmenting paths.
TransportPlanResult w2_exact(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                             int workers = 0);

// Exact solver behind w2_exact, exposed for testing. Row-major cost, n x n.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

double w2_gaussian_closed_form(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1,
                               const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2);

// Sorted-coupling W2 in one dimension (exact).
double w2_1d(std::vector<double> a, std::vector<double> b);

struct SlicedResult {
  double value = 0;
  double std_err = 0;
  int projections = 0;
};

// Average 1D W2 over random unit directions; Monte Carlo standard error
// included. Lower-bounds the exact distance up to directional averaging.
SlicedResult sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int projections,
                       std::uint64_t seed);

// Sampling floor c * sqrt(M0 / n) used when comparing finite batches.
inline double mc_floor(double m0, int n, double c = 2.0) {
  return c * std::sqrt(m0 / static_cast<double>(n));
}

struct AuditRow {
  std::string check;
  double t = 0;
  double x_norm = 0;
  double lhs = 0;
  double rhs = 0;
  double margin = 0;
  bool pass = false;
};

struct AuditProbeSpec {
  std::vector<double> times;     // growth + gradient checks
  std::vector<double> dt_times;  // time-derivative check; must exclude 1
  int points = 64;
  double radius = 0;  // 0 => 6 sqrt(||A||)
  int budget_points = 16;
};

AuditProbeSpec default_audit_probe();

struct AuditReport {
  std::vector<AuditRow> rows;
  double budget_lhs = 0;
  double budget_rhs = 0;
  bool budget_pass = false;
  bool pass = false;

  std::string to_csv() const;
};

// Checks the three field-regularity envelopes plus the accumulated gradient
// budget of the (possibly perturbed) field along the schedule.
AuditReport regularity_audit(const VelocityField& field, const CoefficientSet& coeffs,
                             const AuditProbeSpec& spec, const Schedule& schedule,
                             const PerturbationModel* perturbation = nullptr);

}  // namespace flowlab
