#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowlab/scorefield.hpp"

namespace flowlab {

struct Schedule {
  enum class Kind { Uniform, Custom };

  std::vector<double> t;  // t[0] = 0 < ... < t[N] = 1 - delta
  double delta = 0;
  Kind kind = Kind::Uniform;

  int steps() const { return static_cast<int>(t.size()) - 1; }
  double uniform_step() const;
  void validate() const;
  std::uint64_t digest() const;
};

Schedule uniform_schedule(int steps, double delta = 0);

// First node t1, then log-uniform up to 1 - delta; pairs with the
// exponential-Euler scheme whose natural clock is s = ln(1/t).
Schedule geometric_schedule(int steps, double t1, double delta = 0);

// h * sum_{k=0}^{N-2} 1 / sqrt(1 - t_k^2) (uniform schedules).
double singular_schedule_sum(const Schedule& s);

enum class PerturbKind { None, RandomField, Adversarial };

// Stand-in for an imperfectly learned velocity: a field u(t,x) added to the
// exact velocity, with declared root-mean-square size eps and declared
// gradient budget k8 (pointwise ||grad u(t,.)|| <= k8 t).
class PerturbationModel {
 public:
  static PerturbationModel random_field(int dim, double eps, std::uint64_t seed,
                                        double frequency = 3.2, double ramp = 2.0);
  // Coherent unit-direction drift eps * cos(omega_t * t + phase) * e; its
  // spatial gradient vanishes, so k8 = 0.
  static PerturbationModel adversarial(int dim, double eps, Eigen::VectorXd direction,
                                       double omega_t = 0.0, double phase = 0.0);

  PerturbKind kind() const { return kind_; }
  double eps() const { return eps_; }
  double jacobian_budget() const { return k8_; }
  int dim() const { return dim_; }

  Eigen::VectorXd eval(double t, const Eigen::VectorXd& x) const;
  Eigen::MatrixXd grad(double t, const Eigen::VectorXd& x) const;
  double grad_norm_bound(double t) const;

  struct SelfTest {
    double worst_rel_dev = 0;
    bool pass = false;
    std::vector<std::pair<double, double>> per_time;  // (t, mean |u|^2 / eps^2)
  };
  // Monte Carlo check of E|u(t,.)|^2 == eps^2 over the flow marginals.
  SelfTest self_test(const Target& target, int n, std::uint64_t seed) const;

 private:
  PerturbationModel() = default;

  PerturbKind kind_ = PerturbKind::None;
  int dim_ = 0;
  double eps_ = 0;
  double k8_ = 0;
  double ramp_ = 0;
  // random field pieces
  Eigen::VectorXd base_dir_, feature_dir_, freq_;
  double phase_ = 0;
  // adversarial pieces
  Eigen::VectorXd drift_dir_;
  double omega_t_ = 0;
};

struct StepDiagnostics {
  double t = 0;
  double h = 0;
  double max_abs_velocity = 0;
  double min_ess = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
  Eigen::MatrixXd samples;  // particles x dim
  std::vector<StepDiagnostics> steps;
  double wallclock_s = 0;
  std::uint64_t seed = 0;
  std::string flow;
  std::uint64_t schedule_digest = 0;
};

struct RunOptions {
  int workers = 0;  // 0 => hardware concurrency
};

// Forward-Euler integration of the flow from its Gaussian initial law.
// Bit-reproducible for fixed (schedule, seed) whatever the worker count.
RunResult euler_run(const VelocityField& field, const Schedule& schedule, int particles,
                    std::uint64_t seed, const PerturbationModel* perturbation = nullptr,
                    RunOptions opts = {});

// Exponential-Euler integration of the log-time-rescaled flow; the first
// node t1 must be positive, and the first step pushes by t1 * E[X].
RunResult exp_euler_prob_ode_run(const VelocityField& field, const Schedule& schedule,
                                 int particles, std::uint64_t seed, RunOptions opts = {});

struct LipschitzProbeResult {
  double estimate = 0;
  int pairs = 0;
  double displacement = 0;
};

// Empirical flow-map Lipschitz constant from paired trajectories started at
// (x, x + eta u) with |u| = 1.
LipschitzProbeResult lipschitz_probe_run(const VelocityField& field, const Schedule& schedule,
                                         int pair_count, double displacement,
                                         std::uint64_t seed, RunOptions opts = {});

// The initial batch euler_run draws for (n, seed); exposed so studies can
// couple oracle samples to the same underlying normals.
Eigen::MatrixXd initial_normals(int particles, int dim, std::uint64_t seed);

void parallel_for(int count, int workers, const std::function<void(int, int)>& chunk_fn);

}  // namespace flowlab
