#include "flowlab/linalg.hpp"

#include <stdexcept>

namespace flowlab {

bool is_symmetric(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.norm());
  return (m - m.transpose()).norm() <= tol * scale;
}

bool is_spd(const Eigen::MatrixXd& m, double tol) {
  if (!is_symmetric(m, 1e-10)) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > tol;
}

double commutator_norm(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c) {
  return (a * c - c * a).norm();
}

Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(std::abs(ev.maxCoeff()), 1.0);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol * scale) throw std::domain_error("spd_sqrt: matrix is indefinite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double operator_norm(const Eigen::MatrixXd& m) {
  if (is_symmetric(m)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()[0];
}

namespace {

// Off-diagonal Frobenius mass after conjugation by q.
double offdiag_mass(const Eigen::MatrixXd& m, const Eigen::MatrixXd& q) {
  Eigen::MatrixXd r = q.transpose() * m * q;
  r.diagonal().setZero();
  return r.norm();
}

}  // namespace

CommutingPair make_commuting_pair(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                                  double tol) {
  if (a.rows() != c.rows() || a.cols() != c.cols() || a.rows() != a.cols())
    throw std::domain_error("make_commuting_pair: dimension mismatch");
  if (!is_spd(a) || !is_spd(c))
    throw std::domain_error("make_commuting_pair: A and C must be symmetric positive-definite");

  const double na = operator_norm(a), nc = operator_norm(c);
  if (commutator_norm(a, c) > tol * std::max(na * nc, 1e-300))
    throw std::domain_error("make_commuting_pair: A and C do not commute within tolerance");

  CommutingPair pair;

  // Diagonal inputs need no work.
  Eigen::MatrixXd a_off = a, c_off = c;
  a_off.diagonal().setZero();
  c_off.diagonal().setZero();
  if (a_off.norm() <= tol * std::max(na, 1.0) && c_off.norm() <= tol * std::max(nc, 1.0)) {
    pair.q = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    pair.a = a.diagonal();
    pair.c = c.diagonal();
    return pair;
  }

  // Eigenvectors of A + mu*C separate the joint eigenspaces for generic mu;
  // validate and retry with a second irrational ratio if a coincidence hits.
  const double scale = (nc > 0) ? na / nc : 1.0;
  for (double mu : {0.6180339887498949 * scale, 0.4142135623730951 * scale}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a + mu * c);
    const Eigen::MatrixXd q = es.eigenvectors();
    const double check_tol = 1e-8 * std::max({na, nc, 1.0});
    if (offdiag_mass(a, q) <= check_tol && offdiag_mass(c, q) <= check_tol) {
      pair.q = q;
      pair.a = (q.transpose() * a * q).diagonal();
      pair.c = (q.transpose() * c * q).diagonal();
      return pair;
    }
  }
  throw std::domain_error("make_commuting_pair: failed to find a shared eigenbasis");
}

}  // namespace flowlab
