#pragma once

#include <memory>
#include <vector>

#include "flowlab/targets.hpp"

namespace flowlab {

enum class FlowKind { Follmer, Rectified };
enum class EvalMode { ClosedForm, Quadrature };

// Per-eigendirection kernel scalars at backward time t:
//   abar = a t^2 + c (1 - t^2),  k = (a/abar) t,  b = (a/abar)(1 - t^2).
struct KernelMatrices {
  double t;
  Eigen::VectorXd abar;
  Eigen::VectorXd k;
  Eigen::VectorXd b;
  const CommutingPair* basis;

  Eigen::MatrixXd abar_matrix() const;
  Eigen::MatrixXd k_matrix() const;
  Eigen::MatrixXd b_matrix() const;
};

KernelMatrices kernel_matrices(double t, const CommutingPair& pair);

// Forward-time marginal per mixture component: mean (1-s) m_i and covariance
// (1-s)^2 Sigma_i + s(2-s) C, weights unchanged.
MixtureView forward_marginal_params(const Target& target, double s);

// Draws from the forward marginal at time s (closed-form families only).
Eigen::MatrixXd sample_forward_marginal(const Target& target, double s, int n,
                                        std::uint64_t seed,
                                        StreamPurpose purpose = StreamPurpose::Probe);

struct QuadratureOptions {
  int budget = 100000;
  std::uint64_t seed = 0;
  double ess_floor = 50.0;
  double bt_regularization = 1e-12;
};

struct ModifiedScoreResult {
  Eigen::VectorXd value;
  double ess = 0;
  bool regularized = false;
};

// Pins the randomness of a quadrature evaluation; callers that need common
// random numbers across nearby points share one hint. Inactive hints fall back
// to hashing (t, x), which keeps results independent of evaluation order.
struct StreamHint {
  std::uint64_t id = 0;
  bool active = false;
};

struct SpatialJacobian {
  Eigen::MatrixXd value;
  double fd_step = 0;  // 0 marks an analytic result
};

struct TimeDerivative {
  Eigen::VectorXd value;
  double fd_step = 0;
};

// Velocity field of the deterministic transport flow for one target:
// either the score-driven flow started from N(0, C) or the straight-line
// interpolation flow started from N(0, I). Immutable and safe for concurrent
// evaluation.
class VelocityField {
 public:
  VelocityField(TargetPtr target, FlowKind kind, EvalMode mode, QuadratureOptions opts = {});

  const Target& target() const { return *target_; }
  TargetPtr target_ptr() const { return target_; }
  FlowKind kind() const { return kind_; }
  EvalMode mode() const { return mode_; }
  int dim() const { return target_->dim(); }
  const QuadratureOptions& quadrature_options() const { return opts_; }

  // Initial covariance of the flow (C, or the identity for the interpolation
  // flow).
  Eigen::MatrixXd initial_cov() const;

  Eigen::VectorXd velocity(double t, const Eigen::VectorXd& x,
                           const StreamHint& hint = {}) const;

  // Score S(t,x) = t V(t,x) - x of the score-driven flow.
  Eigen::VectorXd score(double t, const Eigen::VectorXd& x,
                        const StreamHint& hint = {}) const;

  SpatialJacobian jacobian(double t, const Eigen::VectorXd& x,
                           const StreamHint& hint = {}) const;
  TimeDerivative time_derivative(double t, const Eigen::VectorXd& x,
                                 const StreamHint& hint = {}) const;

  // (1/(t-r)) * int_r^t V(tau, x) dtau by adaptive Gauss-Legendre; the
  // quadrature error estimate lands in *err_estimate when given.
  Eigen::VectorXd averaged_velocity(const Eigen::VectorXd& x, double r, double t,
                                    double* err_estimate = nullptr) const;

  // Self-normalized importance-sampling estimate of the modified score
  // (the score with the Gaussian-envelope part removed).
  ModifiedScoreResult modified_score_quadrature(double t, const Eigen::VectorXd& x,
                                                const StreamHint& hint = {}) const;

  // Precomputed per-time evaluator for batched integration steps.
  class Prepared {
   public:
    Eigen::VectorXd velocity(const Eigen::VectorXd& x, const StreamHint& hint = {},
                             double* ess_out = nullptr) const;

   private:
    friend class VelocityField;
    const VelocityField* field_ = nullptr;
    double t_ = 0;
    // closed form: per-component marginal factors and the affine velocity
    // V_i(x) = affine x + shift (envelope cancellation done symbolically)
    struct Component {
      double log_weight_norm;
      Eigen::VectorXd mean;
      Eigen::MatrixXd chol;
      Eigen::MatrixXd precision;
      Eigen::MatrixXd gain;    // pre-precision factor of the affine part
      Eigen::MatrixXd affine;  // gain * precision
      Eigen::VectorXd shift;
    };
    std::vector<Component> components_;
  };
  Prepared prepare(double t) const;

 private:
  Eigen::VectorXd velocity_quadrature(double t, const Eigen::VectorXd& x,
                                      const StreamHint& hint, double* ess_out) const;
  Eigen::VectorXd responsibilities(const Prepared& prep, const Eigen::VectorXd& x) const;
  Eigen::MatrixXd score_premultiplier() const;
  MixtureView backward_components(double t) const;

  TargetPtr target_;
  FlowKind kind_;
  EvalMode mode_;
  QuadratureOptions opts_;
  MixtureView base_components_;   // weights, means, covs of the target itself
  CommutingPair kernel_pair_;     // (A, C) or (A, I) eigen-structure
  bool closed_form_ok_ = false;
};

}  // namespace flowlab
