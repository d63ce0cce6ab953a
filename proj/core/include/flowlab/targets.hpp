#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowlab/errors.hpp"
#include "flowlab/linalg.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

struct MomentSummary {
  double m2 = 0;    // E|X|^2
  double tr_c = 0;  // trace of the reference covariance
  double m0 = 0;    // max(tr_c, m2)
  std::optional<double> std_err;
};

// Cached bounds on the tail remainder h. `analytic` marks bounds proven from
// the family structure; probed caches carry a margin and are flagged.
struct SupNorms {
  double grad_h_sqrt_c = 0.0;  // |sqrt(C) grad h|_inf
  double hess_h_c = 0.0;       // ||C hess h||_inf
  double grad_h = 0.0;         // |grad h|_inf
  double hess_h = 0.0;         // ||hess h||_inf
  bool analytic = true;
};

struct GaussianComponent {
  double weight;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
using MixtureView = std::vector<GaussianComponent>;

// A target distribution with its Gaussian-tail decomposition
// density ~ exp(-|x|^2_A / 2) * exp(h(x)) and the oracles the flow machinery
// consumes. Immutable after construction; sampling is keyed by explicit seeds.
class Target {
 public:
  virtual ~Target() = default;

  virtual std::string family() const = 0;
  int dim() const { return static_cast<int>(c_ref_.rows()); }

  const Eigen::MatrixXd& reference_cov() const { return c_ref_; }
  const Eigen::MatrixXd& envelope() const { return a_env_; }
  const CommutingPair& basis() const { return pair_; }

  // Unnormalized log density -|x|^2_A/2 + h(x); exact (normalized) for
  // mixtures and posteriors. Families without a density refuse.
  virtual double log_density(const Eigen::VectorXd& x) const;

  virtual double h(const Eigen::VectorXd& x) const;
  virtual Eigen::VectorXd grad_h(const Eigen::VectorXd& x) const;
  virtual Eigen::MatrixXd hess_h(const Eigen::VectorXd& x) const;

  virtual SupNorms sup_norms() const = 0;
  virtual Eigen::VectorXd mean() const = 0;
  virtual MomentSummary moments() const = 0;

  // n i.i.d. rows; bit-reproducible for a fixed (seed, purpose).
  Eigen::MatrixXd sample(int n, std::uint64_t seed,
                         StreamPurpose purpose = StreamPurpose::TargetOracle) const {
    return sample_impl(n, seed, purpose);
  }

  // Gaussian-mixture structure when the family has one (drives closed-form
  // scores). Single Gaussians are 1-component views, atom sets have zero
  // covariances.
  virtual std::optional<MixtureView> mixture_view() const { return std::nullopt; }
  bool has_closed_form_score() const { return mixture_view().has_value(); }

 protected:
  virtual Eigen::MatrixXd sample_impl(int n, std::uint64_t seed,
                                      StreamPurpose purpose) const = 0;
  void init_pair(Eigen::MatrixXd a, Eigen::MatrixXd c, double tol = 1e-10);
  static void check_finite(const Eigen::VectorXd& x);

  Eigen::MatrixXd a_env_;
  Eigen::MatrixXd c_ref_;
  CommutingPair pair_;
};

using TargetPtr = std::shared_ptr<const Target>;

class GaussianTarget final : public Target {
 public:
  GaussianTarget(Eigen::VectorXd mean, Eigen::MatrixXd cov, Eigen::MatrixXd c_ref);

  std::string family() const override { return "gaussian"; }
  double log_density(const Eigen::VectorXd& x) const override;
  double h(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd grad_h(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd hess_h(const Eigen::VectorXd& x) const override;
  SupNorms sup_norms() const override { return norms_; }
  Eigen::VectorXd mean() const override { return mean_; }
  MomentSummary moments() const override;
  Eigen::MatrixXd sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const override;
  std::optional<MixtureView> mixture_view() const override;

  const Eigen::MatrixXd& cov() const { return cov_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd precision_mean_;  // cov^{-1} mean = grad h (constant)
  SupNorms norms_;
};

// Generic decomposition exp(-|x|^2_A/2 + h). The h oracles are optional
// (absent means h == 0, i.e. the target is N(0, A)). Cached sup-norms are
// caller-supplied and may deliberately disagree with reality for negative
// controls.
class GaussianTailTarget final : public Target {
 public:
  struct Oracles {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess;
  };

  GaussianTailTarget(Eigen::MatrixXd a, Eigen::MatrixXd c);  // h == 0
  GaussianTailTarget(Eigen::MatrixXd a, Eigen::MatrixXd c, Oracles h, SupNorms cached);

  std::string family() const override { return "gaussian_tail"; }
  double log_density(const Eigen::VectorXd& x) const override;
  double h(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd grad_h(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd hess_h(const Eigen::VectorXd& x) const override;
  SupNorms sup_norms() const override { return norms_; }
  Eigen::VectorXd mean() const override;
  MomentSummary moments() const override;
  Eigen::MatrixXd sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const override;
  std::optional<MixtureView> mixture_view() const override;

  bool trivial_h() const { return !oracles_.value; }

 private:
  Oracles oracles_;
  SupNorms norms_;
  Eigen::MatrixXd chol_a_;
};

class MixtureTarget final : public Target {
 public:
  MixtureTarget(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                std::vector<Eigen::MatrixXd> covs, Eigen::MatrixXd c_ref);

  std::string family() const override { return "mixture"; }
  double log_density(const Eigen::VectorXd& x) const override;  // exact, normalized
  double h(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd grad_h(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd hess_h(const Eigen::VectorXd& x) const override;
  SupNorms sup_norms() const override { return norms_; }
  Eigen::VectorXd mean() const override;
  MomentSummary moments() const override;
  Eigen::MatrixXd sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const override;
  std::optional<MixtureView> mixture_view() const override;

  int components() const { return static_cast<int>(weights_.size()); }

 private:
  Eigen::VectorXd log_mixture_density(const Eigen::VectorXd& x,
                                      double* log_p) const;  // responsibilities

  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covs_;
  std::vector<Eigen::MatrixXd> chols_;
  std::vector<Eigen::MatrixXd> precisions_;
  std::vector<double> log_norms_;
  SupNorms norms_;
};

// Compactly supported target (atoms or a uniform ball) with its early-stopping
// parameters. The envelope is the Gaussian-smoothing covariance at the stop
// time: A = (1 - (1-delta)^2) I, C = I.
class BoundedSupportTarget final : public Target {
 public:
  static std::shared_ptr<BoundedSupportTarget> atoms(Eigen::MatrixXd points,
                                                     Eigen::VectorXd weights, double delta);
  static std::shared_ptr<BoundedSupportTarget> uniform_ball(int dim, double radius,
                                                            double delta);

  std::string family() const override { return kind_; }
  SupNorms sup_norms() const override;
  Eigen::VectorXd mean() const override;
  MomentSummary moments() const override;
  Eigen::MatrixXd sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const override;
  std::optional<MixtureView> mixture_view() const override;

  double diameter() const { return diameter_; }
  double early_stop() const { return delta_; }

 private:
  BoundedSupportTarget() = default;

  std::string kind_;  // "atoms" | "ball"
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
  double radius_ = 0;
  double diameter_ = 0;
  double delta_ = 0;
};

// Posterior exp(-|x|^2_C/2) * exp(-|G(x)-y|^2_Sigma/2); the prior covariance
// doubles as both envelope and reference (A = C).
class BayesPosteriorTarget final : public Target {
 public:
  struct ForwardOperator {
    std::string name;
    int codim;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> value;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
    // hessian[k] = d x d Hessian of component k
    std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> hessian;
    double sup_value = 0;  // |G|_inf
    double sup_jac = 0;    // ||grad G||_inf
    double sup_hess = 0;   // ||hess G||_inf
    bool linear = false;
    Eigen::MatrixXd matrix;  // only when linear
  };

  static ForwardOperator identity_op(int d, double probe_radius);
  static ForwardOperator linear_op(Eigen::MatrixXd g, double probe_radius);
  static ForwardOperator tanh_op(int d);
  static ForwardOperator constant_op(Eigen::VectorXd value, int d);

  BayesPosteriorTarget(Eigen::MatrixXd c_prior, ForwardOperator g, Eigen::MatrixXd sigma,
                       Eigen::VectorXd y);

  std::string family() const override { return "bayes_posterior"; }
  double log_density(const Eigen::VectorXd& x) const override;
  double h(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd grad_h(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd hess_h(const Eigen::VectorXd& x) const override;
  SupNorms sup_norms() const override { return norms_; }
  Eigen::VectorXd mean() const override;
  MomentSummary moments() const override;
  Eigen::MatrixXd sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const override;
  std::optional<MixtureView> mixture_view() const override;

  const ForwardOperator& op() const { return op_; }
  const Eigen::MatrixXd& noise_cov() const { return sigma_; }
  const Eigen::VectorXd& observation() const { return y_; }

  // Dense trapezoid oracle on a +-half_width_sigmas box (d <= 3).
  struct GridOracle {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    int points_per_axis;
    double spacing;
  };
  GridOracle grid_posterior_oracle(int points_per_axis = 401,
                                   double half_width_sigmas = 6.0) const;

  // Posterior Gaussian parameters; only for linear forward operators.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> linear_posterior() const;

 private:
  ForwardOperator op_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd sigma_inv_;
  Eigen::VectorXd y_;
  SupNorms norms_;
};

// ---------------------------------------------------------------------------

struct AssumptionProbeSpec {
  int points = 512;
  double radius = 0.0;  // 0 => 6 sqrt(||A||)
  double commutator_tol = 1e-10;
};

struct AssumptionReport {
  double probed_grad_sqrt_c = 0;
  double probed_hess_c = 0;
  double commutator = 0;
  double commutator_bound = 0;
  SupNorms cached;
  bool pass = false;
  Eigen::VectorXd worst_point;
  std::string notes;
};

// Report-only check of the tail-decomposition bounds on a deterministic probe
// cloud.
AssumptionReport validate_assumptions(const Target& target,
                                      const AssumptionProbeSpec& spec = {});

// Monte Carlo second moment with standard error; budget must be positive.
MomentSummary moments_mc(const Target& target, int budget, std::uint64_t seed);

}  // namespace flowlab
