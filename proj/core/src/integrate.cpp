#include "flowlab/integrate.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace flowlab {

namespace {

constexpr double kHalfPi = 1.5707963267948966;

Eigen::VectorXd unit_vector_from_stream(int dim, const CounterRng& rng, std::uint64_t start) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal(start + static_cast<std::uint64_t>(i));
  const double n = v.norm();
  if (n == 0) {
    v.setZero();
    v[0] = 1;
    return v;
  }
  return v / n;
}

}  // namespace

double Schedule::uniform_step() const {
  if (kind != Kind::Uniform) throw ConfigError("schedule: uniform step requested on a custom grid");
  return t.size() > 1 ? t[1] - t[0] : 0.0;
}

void Schedule::validate() const {
  if (t.size() < 2) throw std::domain_error("schedule: needs at least one step");
  if (t.front() != 0.0) throw std::domain_error("schedule: grid must start at 0");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw std::domain_error("schedule: grid must be strictly increasing");
  if (delta < 0 || delta >= 1) throw std::domain_error("schedule: delta outside [0,1)");
  if (std::abs(t.back() - (1.0 - delta)) > 1e-12)
    throw std::domain_error("schedule: grid must end at 1 - delta");
  if (kind == Kind::Uniform) {
    const double h = t[1] - t[0];
    for (std::size_t i = 1; i < t.size(); ++i)
      if (std::abs((t[i] - t[i - 1]) - h) > 1e-15 * std::max(1.0, h) + 1e-15)
        throw std::domain_error("schedule: uniform grid has uneven steps");
  }
}

std::uint64_t Schedule::digest() const {
  std::uint64_t h = fnv1a64(t.data(), t.size() * sizeof(double));
  h = fnv1a64(&delta, sizeof(delta), h);
  return h;
}

Schedule uniform_schedule(int steps, double delta) {
  if (steps < 1) throw std::domain_error("uniform_schedule: steps must be >= 1");
  if (delta < 0 || delta >= 1) throw std::domain_error("uniform_schedule: delta outside [0,1)");
  Schedule s;
  s.kind = Schedule::Kind::Uniform;
  s.delta = delta;
  s.t.resize(steps + 1);
  const double h = (1.0 - delta) / steps;
  for (int n = 0; n <= steps; ++n) s.t[n] = n * h;
  s.t[steps] = 1.0 - delta;
  s.validate();
  return s;
}

Schedule geometric_schedule(int steps, double t1, double delta) {
  if (steps < 1) throw std::domain_error("geometric_schedule: steps must be >= 1");
  if (delta < 0 || delta >= 1) throw std::domain_error("geometric_schedule: delta outside [0,1)");
  if (!(t1 > 0) || t1 >= 1.0 - delta)
    throw std::domain_error("geometric_schedule: t1 must lie in (0, 1 - delta)");
  Schedule s;
  s.kind = Schedule::Kind::Custom;
  s.delta = delta;
  s.t.resize(steps + 1);
  s.t[0] = 0.0;
  if (steps == 1) {
    s.t[1] = 1.0 - delta;
  } else {
    const double s1 = std::log(1.0 / t1);
    const double send = std::log(1.0 / (1.0 - delta));
    for (int n = 1; n <= steps; ++n)
      s.t[n] = std::exp(-(s1 + (send - s1) * (n - 1) / (steps - 1)));
    s.t[1] = t1;
    s.t[steps] = 1.0 - delta;
  }
  s.validate();
  return s;
}

double singular_schedule_sum(const Schedule& s) {
  const double h = s.uniform_step();
  CompensatedSum acc;
  for (int k = 0; k <= s.steps() - 2; ++k)
    acc.add(1.0 / std::sqrt(1.0 - s.t[k] * s.t[k]));
  return h * acc.value();
}

// -------------------------------------------------------- PerturbationModel --

PerturbationModel PerturbationModel::random_field(int dim, double eps, std::uint64_t seed,
                                                  double frequency, double ramp) {
  if (eps < 0) throw ConfigError("perturbation: eps must be nonnegative");
  PerturbationModel m;
  m.kind_ = PerturbKind::RandomField;
  m.dim_ = dim;
  m.eps_ = eps;
  m.ramp_ = ramp;
  CounterRng rng(seed, StreamPurpose::Perturbation, 0);
  m.base_dir_ = unit_vector_from_stream(dim, rng, 0);
  m.feature_dir_ = unit_vector_from_stream(dim, rng, 64);
  m.freq_ = frequency * unit_vector_from_stream(dim, rng, 128);
  m.phase_ = 2.0 * M_PI * rng.uniform(256);
  m.k8_ = eps * std::sqrt(2.0) * ramp * m.freq_.norm();
  return m;
}

PerturbationModel PerturbationModel::adversarial(int dim, double eps, Eigen::VectorXd direction,
                                                 double omega_t, double phase) {
  if (eps < 0) throw ConfigError("perturbation: eps must be nonnegative");
  PerturbationModel m;
  m.kind_ = PerturbKind::Adversarial;
  m.dim_ = dim;
  m.eps_ = eps;
  m.omega_t_ = omega_t;
  m.phase_ = phase;
  const double n = direction.norm();
  if (n == 0) throw ConfigError("perturbation: adversarial direction must be nonzero");
  m.drift_dir_ = direction / n;
  m.k8_ = 0.0;
  return m;
}

Eigen::VectorXd PerturbationModel::eval(double t, const Eigen::VectorXd& x) const {
  switch (kind_) {
    case PerturbKind::None:
      return Eigen::VectorXd::Zero(dim_);
    case PerturbKind::Adversarial:
      return eps_ * std::cos(omega_t_ * t + phase_) * drift_dir_;
    case PerturbKind::RandomField: {
      const double theta = std::min(ramp_ * t, kHalfPi);
      const double wave = std::sqrt(2.0) * std::cos(freq_.dot(x) + phase_);
      return eps_ * (std::cos(theta) * base_dir_ + std::sin(theta) * wave * feature_dir_);
    }
  }
  return Eigen::VectorXd::Zero(dim_);
}

Eigen::MatrixXd PerturbationModel::grad(double t, const Eigen::VectorXd& x) const {
  if (kind_ != PerturbKind::RandomField) return Eigen::MatrixXd::Zero(dim_, dim_);
  const double theta = std::min(ramp_ * t, kHalfPi);
  const double dwave = -std::sqrt(2.0) * std::sin(freq_.dot(x) + phase_);
  return (eps_ * std::sin(theta) * dwave) * (feature_dir_ * freq_.transpose());
}

double PerturbationModel::grad_norm_bound(double t) const {
  if (kind_ != PerturbKind::RandomField) return 0.0;
  return eps_ * std::sqrt(2.0) * std::sin(std::min(ramp_ * t, kHalfPi)) * freq_.norm();
}

PerturbationModel::SelfTest PerturbationModel::self_test(const Target& target, int n,
                                                         std::uint64_t seed) const {
  SelfTest result;
  if (kind_ == PerturbKind::None || eps_ == 0) {
    result.pass = true;
    return result;
  }
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const Eigen::MatrixXd xs = sample_forward_marginal(target, 1.0 - t, n, seed);
    CompensatedSum acc;
    for (int i = 0; i < n; ++i) acc.add(eval(t, xs.row(i).transpose()).squaredNorm());
    const double ratio = acc.value() / n / (eps_ * eps_);
    result.per_time.push_back({t, ratio});
    result.worst_rel_dev = std::max(result.worst_rel_dev, std::abs(ratio - 1.0));
  }
  result.pass = result.worst_rel_dev <= 0.02;
  return result;
}

// --------------------------------------------------------------- execution --

void parallel_for(int count, int workers, const std::function<void(int, int)>& chunk_fn) {
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    chunk_fn(0, count);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const int chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        chunk_fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failed) std::rethrow_exception(first_error);
}

Eigen::MatrixXd initial_normals(int particles, int dim, std::uint64_t seed) {
  return standard_normal_matrix(particles, dim, seed, StreamPurpose::InitialDraw);
}

namespace {

struct StepAccumulator {
  double max_v = 0;
  double min_ess = std::numeric_limits<double>::infinity();
  bool saw_ess = false;
};

void check_state(const Eigen::VectorXd& v, int step, int particle, const char* what) {
  if (!v.allFinite()) {
    std::ostringstream os;
    os << what << ": non-finite state at step " << step << ", particle " << particle;
    throw NumericError(os.str());
  }
}

}  // namespace

RunResult euler_run(const VelocityField& field, const Schedule& schedule, int particles,
                    std::uint64_t seed, const PerturbationModel* perturbation,
                    RunOptions opts) {
  schedule.validate();
  if (particles < 1) throw std::domain_error("euler_run: particles must be >= 1");
  if (perturbation && perturbation->kind() != PerturbKind::None &&
      perturbation->dim() != field.dim())
    throw ConfigError("euler_run: perturbation dimension mismatch");
  const auto start = std::chrono::steady_clock::now();
  const int d = field.dim();

  Eigen::MatrixXd state = initial_normals(particles, d, seed);
  {
    Eigen::LLT<Eigen::MatrixXd> llt(field.initial_cov());
    state = state * Eigen::MatrixXd(llt.matrixL()).transpose();
  }

  RunResult result;
  result.seed = seed;
  result.flow = field.kind() == FlowKind::Follmer ? "follmer" : "rectified";
  result.schedule_digest = schedule.digest();

  const int nsteps = schedule.steps();
  for (int n = 0; n < nsteps; ++n) {
    const double t = schedule.t[n];
    const double h = schedule.t[n + 1] - schedule.t[n];
    const auto prep = field.prepare(t);
    StepDiagnostics diag;
    diag.t = t;
    diag.h = h;
    std::mutex diag_mutex;
    parallel_for(particles, opts.workers, [&](int begin, int end) {
      StepAccumulator local;
      Eigen::VectorXd x(d), v(d);
      for (int i = begin; i < end; ++i) {
        x = state.row(i).transpose();
        double ess = std::numeric_limits<double>::quiet_NaN();
        const StreamHint hint{(static_cast<std::uint64_t>(n) << 32) ^
                                  static_cast<std::uint64_t>(i),
                              true};
        v = prep.velocity(x, hint, &ess);
        if (perturbation && perturbation->kind() != PerturbKind::None)
          v += perturbation->eval(t, x);
        check_state(v, n, i, "euler_run");
        local.max_v = std::max(local.max_v, v.norm());
        if (std::isfinite(ess)) {
          local.saw_ess = true;
          local.min_ess = std::min(local.min_ess, ess);
        }
        state.row(i) += h * v.transpose();
      }
      std::lock_guard<std::mutex> lock(diag_mutex);
      diag.max_abs_velocity = std::max(diag.max_abs_velocity, local.max_v);
      if (local.saw_ess)
        diag.min_ess = std::isfinite(diag.min_ess) ? std::min(diag.min_ess, local.min_ess)
                                                   : local.min_ess;
    });
    result.steps.push_back(diag);
  }
  result.samples = std::move(state);
  result.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

RunResult exp_euler_prob_ode_run(const VelocityField& field, const Schedule& schedule,
                                 int particles, std::uint64_t seed, RunOptions opts) {
  schedule.validate();
  if (field.kind() != FlowKind::Follmer)
    throw UnsupportedFamilyError("exp_euler_prob_ode_run: needs the score-driven flow");
  if (!(schedule.t[1] > 0))
    throw std::domain_error("exp_euler_prob_ode_run: t1 must be positive (log time diverges)");
  const auto start = std::chrono::steady_clock::now();
  const int d = field.dim();

  Eigen::MatrixXd state = initial_normals(particles, d, seed);
  {
    Eigen::LLT<Eigen::MatrixXd> llt(field.initial_cov());
    state = state * Eigen::MatrixXd(llt.matrixL()).transpose();
  }

  RunResult result;
  result.seed = seed;
  result.flow = "prob-ode";
  result.schedule_digest = schedule.digest();

  // Single first-order push from the infinite-time end.
  const Eigen::VectorXd mean_push = schedule.t[1] * field.target().mean();
  state.rowwise() += mean_push.transpose();
  result.steps.push_back({0.0, schedule.t[1], field.target().mean().norm(),
                          std::numeric_limits<double>::quiet_NaN()});

  const int nsteps = schedule.steps();
  for (int n = 2; n <= nsteps; ++n) {
    const double t_prev = schedule.t[n - 1];
    const double t_cur = schedule.t[n];
    const double s_prev = std::log(1.0 / t_prev);
    const double s_cur = std::log(1.0 / t_cur);
    const double factor = std::expm1(s_prev - s_cur);  // e^{s_{n-1}-s_n} - 1
    const auto prep = field.prepare(t_prev);
    StepDiagnostics diag;
    diag.t = t_prev;
    diag.h = t_cur - t_prev;
    std::mutex diag_mutex;
    parallel_for(particles, opts.workers, [&](int begin, int end) {
      double max_v = 0, min_ess = std::numeric_limits<double>::infinity();
      bool saw_ess = false;
      Eigen::VectorXd x(d), v(d);
      for (int i = begin; i < end; ++i) {
        x = state.row(i).transpose();
        double ess = std::numeric_limits<double>::quiet_NaN();
        const StreamHint hint{(static_cast<std::uint64_t>(n) << 32) ^
                                  static_cast<std::uint64_t>(i),
                              true};
        v = prep.velocity(x, hint, &ess);
        check_state(v, n, i, "exp_euler_prob_ode_run");
        // score + state = t V(t, .)
        state.row(i) += factor * t_prev * v.transpose();
        max_v = std::max(max_v, v.norm());
        if (std::isfinite(ess)) {
          saw_ess = true;
          min_ess = std::min(min_ess, ess);
        }
      }
      std::lock_guard<std::mutex> lock(diag_mutex);
      diag.max_abs_velocity = std::max(diag.max_abs_velocity, max_v);
      if (saw_ess)
        diag.min_ess = std::isfinite(diag.min_ess) ? std::min(diag.min_ess, min_ess) : min_ess;
    });
    result.steps.push_back(diag);
  }
  result.samples = std::move(state);
  result.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

LipschitzProbeResult lipschitz_probe_run(const VelocityField& field, const Schedule& schedule,
                                         int pair_count, double displacement,
                                         std::uint64_t seed, RunOptions opts) {
  schedule.validate();
  if (!(displacement > 0))
    throw std::domain_error("lipschitz_probe_run: displacement must be positive");
  const int d = field.dim();
  Eigen::LLT<Eigen::MatrixXd> llt(field.initial_cov());
  const Eigen::MatrixXd chol = llt.matrixL();

  std::vector<double> ratios(pair_count, 0.0);
  parallel_for(pair_count, opts.workers, [&](int begin, int end) {
    Eigen::VectorXd z(d);
    for (int p = begin; p < end; ++p) {
      CounterRng rng(seed, StreamPurpose::Probe, static_cast<std::uint64_t>(p));
      rng.fill_normal(z);
      Eigen::VectorXd a = chol * z;
      Eigen::VectorXd u = unit_vector_from_stream(d, rng, static_cast<std::uint64_t>(2 * d + 2));
      Eigen::VectorXd b = a + displacement * u;
      for (int n = 0; n < schedule.steps(); ++n) {
        const double t = schedule.t[n];
        const double h = schedule.t[n + 1] - schedule.t[n];
        const StreamHint hint{(static_cast<std::uint64_t>(n) << 32) ^
                                  static_cast<std::uint64_t>(p),
                              true};
        a += h * field.velocity(t, a, hint);
        b += h * field.velocity(t, b, hint);
      }
      ratios[p] = (a - b).norm() / displacement;
    }
  });
  LipschitzProbeResult out;
  out.pairs = pair_count;
  out.displacement = displacement;
  for (double r : ratios) out.estimate = std::max(out.estimate, r);
  return out;
}

}  // namespace flowlab
