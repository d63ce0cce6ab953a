#pragma once

#include <Eigen/Dense>

namespace flowlab {

bool is_symmetric(const Eigen::MatrixXd& m, double tol = 1e-12);
bool is_spd(const Eigen::MatrixXd& m, double tol = 0.0);

// ||AC - CA||_F
double commutator_norm(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c);

// Symmetric PSD square root; throws std::domain_error on indefinite input
// (eigenvalues below -tol * ||m||).
Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m, double tol = 1e-10);

double operator_norm(const Eigen::MatrixXd& m);

// Shared orthonormal eigenbasis of a commuting SPD pair: Q^T A Q = diag(a),
// Q^T C Q = diag(c). The per-direction scalars (a_i, c_i) drive all kernel and
// coefficient formulas.
struct CommutingPair {
  Eigen::MatrixXd q;
  Eigen::VectorXd a;
  Eigen::VectorXd c;

  int dim() const { return static_cast<int>(a.size()); }
  Eigen::MatrixXd a_matrix() const { return q * a.asDiagonal() * q.transpose(); }
  Eigen::MatrixXd c_matrix() const { return q * c.asDiagonal() * q.transpose(); }
  double norm_a() const { return a.maxCoeff(); }
  double norm_c() const { return c.maxCoeff(); }
};

// Joint diagonalization, validated to `tol` (relative off-diagonal mass).
// Requires A, C SPD and commuting within tol * ||A|| * ||C||.
CommutingPair make_commuting_pair(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                                  double tol = 1e-10);

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace flowlab
