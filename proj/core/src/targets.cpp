#include "flowlab/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace flowlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093455;

Eigen::MatrixXd cholesky_of(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::domain_error(std::string(what) + ": matrix is not positive-definite");
  return llt.matrixL();
}

}  // namespace

// ----------------------------------------------------------------- Target --

void Target::init_pair(Eigen::MatrixXd a, Eigen::MatrixXd c, double tol) {
  a_env_ = std::move(a);
  c_ref_ = std::move(c);
  pair_ = make_commuting_pair(a_env_, c_ref_, tol);
}

void Target::check_finite(const Eigen::VectorXd& x) {
  if (!x.allFinite()) throw std::domain_error("target: non-finite evaluation point");
}

double Target::log_density(const Eigen::VectorXd& x) const {
  check_finite(x);
  const Eigen::VectorXd z = pair_.q.transpose() * x;
  double quad = 0;
  for (int i = 0; i < dim(); ++i) quad += z[i] * z[i] / pair_.a[i];
  return -0.5 * quad + h(x);
}

double Target::h(const Eigen::VectorXd&) const { return 0.0; }

Eigen::VectorXd Target::grad_h(const Eigen::VectorXd& x) const {
  return Eigen::VectorXd::Zero(x.size());
}

Eigen::MatrixXd Target::hess_h(const Eigen::VectorXd& x) const {
  return Eigen::MatrixXd::Zero(x.size(), x.size());
}

// --------------------------------------------------------- GaussianTarget --

GaussianTarget::GaussianTarget(Eigen::VectorXd mean, Eigen::MatrixXd cov,
                               Eigen::MatrixXd c_ref)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  init_pair(cov_, std::move(c_ref));
  chol_ = cholesky_of(cov_, "gaussian target covariance");
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  precision_mean_ = llt.solve(mean_);

  const Eigen::MatrixXd sqrt_c = spd_sqrt(c_ref_);
  norms_.grad_h = precision_mean_.norm();
  norms_.grad_h_sqrt_c = (sqrt_c * precision_mean_).norm();
  norms_.hess_h = 0.0;
  norms_.hess_h_c = 0.0;
  norms_.analytic = true;
}

double GaussianTarget::log_density(const Eigen::VectorXd& x) const {
  check_finite(x);
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return -0.5 * z.squaredNorm();
}

double GaussianTarget::h(const Eigen::VectorXd& x) const { return precision_mean_.dot(x); }

Eigen::VectorXd GaussianTarget::grad_h(const Eigen::VectorXd&) const { return precision_mean_; }

Eigen::MatrixXd GaussianTarget::hess_h(const Eigen::VectorXd& x) const {
  return Eigen::MatrixXd::Zero(x.size(), x.size());
}

MomentSummary GaussianTarget::moments() const {
  MomentSummary m;
  m.m2 = mean_.squaredNorm() + cov_.trace();
  m.tr_c = c_ref_.trace();
  m.m0 = std::max(m.m2, m.tr_c);
  return m;
}

Eigen::MatrixXd GaussianTarget::sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const {
  const int d = dim();
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, purpose, 2ull * static_cast<std::uint64_t>(i));
    Eigen::VectorXd z(d);
    rng.fill_normal(z);
    out.row(i) = (mean_ + chol_ * z).transpose();
  }
  return out;
}

std::optional<MixtureView> GaussianTarget::mixture_view() const {
  return MixtureView{{1.0, mean_, cov_}};
}

// ----------------------------------------------------- GaussianTailTarget --

GaussianTailTarget::GaussianTailTarget(Eigen::MatrixXd a, Eigen::MatrixXd c) {
  init_pair(std::move(a), std::move(c));
  chol_a_ = cholesky_of(a_env_, "gaussian_tail envelope");
  norms_ = SupNorms{};
}

GaussianTailTarget::GaussianTailTarget(Eigen::MatrixXd a, Eigen::MatrixXd c, Oracles h,
                                       SupNorms cached)
    : oracles_(std::move(h)), norms_(cached) {
  init_pair(std::move(a), std::move(c));
  chol_a_ = cholesky_of(a_env_, "gaussian_tail envelope");
}

double GaussianTailTarget::log_density(const Eigen::VectorXd& x) const {
  return Target::log_density(x);
}

double GaussianTailTarget::h(const Eigen::VectorXd& x) const {
  return oracles_.value ? oracles_.value(x) : 0.0;
}

Eigen::VectorXd GaussianTailTarget::grad_h(const Eigen::VectorXd& x) const {
  return oracles_.grad ? oracles_.grad(x) : Eigen::VectorXd::Zero(x.size()).eval();
}

Eigen::MatrixXd GaussianTailTarget::hess_h(const Eigen::VectorXd& x) const {
  return oracles_.hess ? oracles_.hess(x)
                       : Eigen::MatrixXd::Zero(x.size(), x.size()).eval();
}

Eigen::VectorXd GaussianTailTarget::mean() const {
  if (trivial_h()) return Eigen::VectorXd::Zero(dim());
  throw UnsupportedFamilyError("gaussian_tail: no closed-form mean for a nontrivial remainder");
}

MomentSummary GaussianTailTarget::moments() const {
  if (!trivial_h())
    throw ConfigError("gaussian_tail: closed-form moments need h == 0; use moments_mc");
  MomentSummary m;
  m.m2 = a_env_.trace();
  m.tr_c = c_ref_.trace();
  m.m0 = std::max(m.m2, m.tr_c);
  return m;
}

Eigen::MatrixXd GaussianTailTarget::sample_impl(int n, std::uint64_t seed,
                                           StreamPurpose purpose) const {
  if (!trivial_h())
    throw UnsupportedFamilyError("gaussian_tail: sampling requires h == 0");
  const int d = dim();
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, purpose, 2ull * static_cast<std::uint64_t>(i));
    Eigen::VectorXd z(d);
    rng.fill_normal(z);
    out.row(i) = (chol_a_ * z).transpose();
  }
  return out;
}

std::optional<MixtureView> GaussianTailTarget::mixture_view() const {
  if (!trivial_h()) return std::nullopt;
  return MixtureView{{1.0, Eigen::VectorXd::Zero(dim()), a_env_}};
}

// ---------------------------------------------------------- MixtureTarget --

MixtureTarget::MixtureTarget(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                             std::vector<Eigen::MatrixXd> covs, Eigen::MatrixXd c_ref)
    : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covs)) {
  if (weights_.empty() || weights_.size() != means_.size() || weights_.size() != covs_.size())
    throw ConfigError("mixture: weights/means/covs size mismatch");
  double total = 0;
  for (double w : weights_) {
    if (w <= 0) throw ConfigError("mixture: weights must be positive");
    total += w;
  }
  for (double& w : weights_) w /= total;

  const int d = static_cast<int>(means_[0].size());
  double min_eig = std::numeric_limits<double>::infinity();
  for (const auto& s : covs_) {
    if (s.rows() != d || s.cols() != d) throw ConfigError("mixture: covariance shape mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0)
      throw std::domain_error("mixture: component covariance is not positive-definite");
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  // Envelope convention: tightest isotropic Gaussian that all components decay
  // at least as fast as.
  init_pair(min_eig * Eigen::MatrixXd::Identity(d, d), std::move(c_ref));

  for (const auto& s : covs_) {
    chols_.push_back(cholesky_of(s, "mixture component covariance"));
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    precisions_.push_back(llt.solve(Eigen::MatrixXd::Identity(d, d)));
    double log_det = 0;
    for (int i = 0; i < d; ++i) log_det += std::log(chols_.back()(i, i));
    log_norms_.push_back(-log_det - 0.5 * d * kLog2Pi);
  }

  // Equal isotropic component covariances admit proven sup-norm bounds;
  // anything else gets probed caches with a margin.
  bool equal_iso = true;
  for (const auto& s : covs_)
    if ((s - min_eig * Eigen::MatrixXd::Identity(d, d)).norm() > 1e-12 * std::max(1.0, min_eig))
      equal_iso = false;
  const double norm_c = operator_norm(c_ref_);
  const double sqrt_norm_c = std::sqrt(norm_c);
  if (equal_iso) {
    double max_mean = 0;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (const auto& m : means_) centroid += m;
    centroid /= static_cast<double>(means_.size());
    double max_spread2 = 0;
    for (const auto& m : means_) {
      max_mean = std::max(max_mean, m.norm());
      max_spread2 = std::max(max_spread2, (m - centroid).squaredNorm());
    }
    norms_.grad_h = max_mean / min_eig;
    norms_.hess_h = max_spread2 / (min_eig * min_eig);
    norms_.grad_h_sqrt_c = sqrt_norm_c * norms_.grad_h;
    norms_.hess_h_c = norm_c * norms_.hess_h;
    norms_.analytic = true;
  } else {
    const double radius = 6.0 * std::sqrt(operator_norm(a_env_));
    const Eigen::MatrixXd probe = probe_ball(2047, d, radius);
    const Eigen::MatrixXd sqrt_c = spd_sqrt(c_ref_);
    double g = 0, gh = 0, hn = 0, hc = 0;
    for (int i = 0; i < probe.rows(); ++i) {
      const Eigen::VectorXd x = probe.row(i).transpose();
      const Eigen::VectorXd gv = grad_h(x);
      const Eigen::MatrixXd hv = hess_h(x);
      g = std::max(g, gv.norm());
      gh = std::max(gh, (sqrt_c * gv).norm());
      hn = std::max(hn, operator_norm(hv));
      hc = std::max(hc, operator_norm(c_ref_ * hv));
    }
    norms_.grad_h = 1.25 * g;
    norms_.grad_h_sqrt_c = 1.25 * gh;
    norms_.hess_h = 1.25 * hn;
    norms_.hess_h_c = 1.25 * hc;
    norms_.analytic = false;
  }
}

Eigen::VectorXd MixtureTarget::log_mixture_density(const Eigen::VectorXd& x,
                                                   double* log_p) const {
  const int k = components();
  Eigen::VectorXd lw(k);
  for (int i = 0; i < k; ++i) {
    const Eigen::VectorXd z = chols_[i].triangularView<Eigen::Lower>().solve(x - means_[i]);
    lw[i] = std::log(weights_[i]) + log_norms_[i] - 0.5 * z.squaredNorm();
  }
  const double m = lw.maxCoeff();
  const double lse = m + std::log((lw.array() - m).exp().sum());
  if (log_p) *log_p = lse;
  return (lw.array() - lse).exp();
}

double MixtureTarget::log_density(const Eigen::VectorXd& x) const {
  check_finite(x);
  double lp = 0;
  log_mixture_density(x, &lp);
  return lp;
}

double MixtureTarget::h(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z = pair_.q.transpose() * x;
  double quad = 0;
  for (int i = 0; i < dim(); ++i) quad += z[i] * z[i] / pair_.a[i];
  return log_density(x) + 0.5 * quad;
}

Eigen::VectorXd MixtureTarget::grad_h(const Eigen::VectorXd& x) const {
  check_finite(x);
  const Eigen::VectorXd r = log_mixture_density(x, nullptr);
  Eigen::VectorXd grad_log = Eigen::VectorXd::Zero(dim());
  for (int i = 0; i < components(); ++i)
    grad_log -= r[i] * (precisions_[i] * (x - means_[i]));
  // A^{-1} x in the shared eigenbasis
  Eigen::VectorXd z = pair_.q.transpose() * x;
  for (int i = 0; i < dim(); ++i) z[i] /= pair_.a[i];
  return grad_log + pair_.q * z;
}

Eigen::MatrixXd MixtureTarget::hess_h(const Eigen::VectorXd& x) const {
  check_finite(x);
  const int d = dim();
  const Eigen::VectorXd r = log_mixture_density(x, nullptr);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd gbar = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < components(); ++i) {
    const Eigen::VectorXd gi = -(precisions_[i] * (x - means_[i]));
    hess += r[i] * (gi * gi.transpose() - precisions_[i]);
    gbar += r[i] * gi;
  }
  hess -= gbar * gbar.transpose();
  Eigen::MatrixXd a_inv = pair_.q * pair_.a.cwiseInverse().asDiagonal() * pair_.q.transpose();
  return hess + a_inv;
}

Eigen::VectorXd MixtureTarget::mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (int i = 0; i < components(); ++i) m += weights_[i] * means_[i];
  return m;
}

MomentSummary MixtureTarget::moments() const {
  MomentSummary m;
  for (int i = 0; i < components(); ++i)
    m.m2 += weights_[i] * (means_[i].squaredNorm() + covs_[i].trace());
  m.tr_c = c_ref_.trace();
  m.m0 = std::max(m.m2, m.tr_c);
  return m;
}

Eigen::MatrixXd MixtureTarget::sample_impl(int n, std::uint64_t seed, StreamPurpose purpose) const {
  const int d = dim();
  std::vector<double> cumulative(weights_.size());
  std::partial_sum(weights_.begin(), weights_.end(), cumulative.begin());
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    CounterRng normals(seed, purpose, 2ull * static_cast<std::uint64_t>(i));
    CounterRng uniforms(seed, purpose, 2ull * static_cast<std::uint64_t>(i) + 1);
    const double u = uniforms.uniform(0);
    int c = static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                             cumulative.begin());
    c = std::min(c, components() - 1);
    Eigen::VectorXd z(d);
    normals.fill_normal(z);
    out.row(i) = (means_[c] + chols_[c] * z).transpose();
  }
  return out;
}

std::optional<MixtureView> MixtureTarget::mixture_view() const {
  MixtureView view;
  for (int i = 0; i < components(); ++i) view.push_back({weights_[i], means_[i], covs_[i]});
  return view;
}

// --------------------------------------------------- BoundedSupportTarget --

std::shared_ptr<BoundedSupportTarget> BoundedSupportTarget::atoms(Eigen::MatrixXd points,
                                                                  Eigen::VectorXd weights,
                                                                  double delta) {
  if (delta <= 0 || delta >= 1) throw std::domain_error("atoms: delta must lie in (0,1)");
  if (points.rows() != weights.size() || points.rows() == 0)
    throw ConfigError("atoms: points/weights mismatch");
  auto t = std::shared_ptr<BoundedSupportTarget>(new BoundedSupportTarget());
  t->kind_ = "atoms";
  t->points_ = std::move(points);
  t->weights_ = weights / weights.sum();
  t->delta_ = delta;
  double diam = 0;
  for (int i = 0; i < t->points_.rows(); ++i)
    for (int j = i + 1; j < t->points_.rows(); ++j)
      diam = std::max(diam, (t->points_.row(i) - t->points_.row(j)).norm());
  t->diameter_ = diam;
  const int d = static_cast<int>(t->points_.cols());
  const double sigma2 = 1.0 - (1.0 - delta) * (1.0 - delta);
  t->init_pair(sigma2 * Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Identity(d, d));
  return t;
}

std::shared_ptr<BoundedSupportTarget> BoundedSupportTarget::uniform_ball(int dim, double radius,
                                                                         double delta) {
  if (delta <= 0 || delta >= 1) throw std::domain_error("ball: delta must lie in (0,1)");
  if (radius <= 0 || dim <= 0) throw ConfigError("ball: radius and dim must be positive");
  auto t = std::shared_ptr<BoundedSupportTarget>(new BoundedSupportTarget());
  t->kind_ = "ball";
  t->radius_ = radius;
  t->diameter_ = 2 * radius;
  t->delta_ = delta;
  const double sigma2 = 1.0 - (1.0 - delta) * (1.0 - delta);
  t->init_pair(sigma2 * Eigen::MatrixXd::Identity(dim, dim),
               Eigen::MatrixXd::Identity(dim, dim));
  return t;
}

SupNorms BoundedSupportTarget::sup_norms() const {
  // Smoothed-target bounds at the stop time. sigma^2 = 1 - (1-delta)^2.
  const double s2 = 1.0 - (1.0 - delta_) * (1.0 - delta_);
  SupNorms n;
  n.grad_h = diameter_ / s2;
  n.hess_h = 2.0 * diameter_ * diameter_ / (s2 * s2);
  n.grad_h_sqrt_c = n.grad_h;
  n.hess_h_c = n.hess_h;
  n.analytic = true;
  return n;
}

Eigen::VectorXd BoundedSupportTarget::mean() const {
  const int d = dim();
  if (kind_ == "ball") return Eigen::VectorXd::Zero(d);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < points_.rows(); ++i) m += weights_[i] * points_.row(i).transpose();
  return m;
}

MomentSummary BoundedSupportTarget::moments() const {
  MomentSummary m;
  if (kind_ == "ball") {
    const int d = dim();
    m.m2 = radius_ * radius_ * d / (d + 2.0);
  } else {
    for (int i = 0; i < points_.rows(); ++i) m.m2 += weights_[i] * points_.row(i).squaredNorm();
  }
  m.tr_c = c_ref_.trace();
  m.m0 = std::max(m.m2, m.tr_c);
  return m;
}

Eigen::MatrixXd BoundedSupportTarget::sample_impl(int n, std::uint64_t seed,
                                             StreamPurpose purpose) const {
  const int d = dim();
  Eigen::MatrixXd out(n, d);
  if (kind_ == "atoms") {
    std::vector<double> cumulative(weights_.size());
    std::partial_sum(weights_.data(), weights_.data() + weights_.size(), cumulative.begin());
    for (int i = 0; i < n; ++i) {
      CounterRng uniforms(seed, purpose, 2ull * static_cast<std::uint64_t>(i) + 1);
      const double u = uniforms.uniform(0);
      int c = static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                               cumulative.begin());
      c = std::min<int>(c, static_cast<int>(points_.rows()) - 1);
      out.row(i) = points_.row(c);
    }
    return out;
  }
  for (int i = 0; i < n; ++i) {
    CounterRng normals(seed, purpose, 2ull * static_cast<std::uint64_t>(i));
    CounterRng uniforms(seed, purpose, 2ull * static_cast<std::uint64_t>(i) + 1);
    Eigen::VectorXd z(d);
    normals.fill_normal(z);
    const double r = radius_ * std::pow(uniforms.uniform(0), 1.0 / d);
    out.row(i) = (r / z.norm()) * z.transpose();
  }
  return out;
}

std::optional<MixtureView> BoundedSupportTarget::mixture_view() const {
  if (kind_ != "atoms") return std::nullopt;
  MixtureView view;
  const int d = dim();
  for (int i = 0; i < points_.rows(); ++i)
    view.push_back({weights_[i], points_.row(i).transpose(), Eigen::MatrixXd::Zero(d, d)});
  return view;
}

// ---------------------------------------------------- BayesPosteriorTarget --

BayesPosteriorTarget::ForwardOperator BayesPosteriorTarget::identity_op(int d,
                                                                        double probe_radius) {
  return linear_op(Eigen::MatrixXd::Identity(d, d), probe_radius);
}

BayesPosteriorTarget::ForwardOperator BayesPosteriorTarget::linear_op(Eigen::MatrixXd g,
                                                                      double probe_radius) {
  ForwardOperator op;
  op.name = "linear";
  op.codim = static_cast<int>(g.rows());
  op.linear = true;
  op.matrix = g;
  op.value = [g](const Eigen::VectorXd& x) { return (g * x).eval(); };
  op.jacobian = [g](const Eigen::VectorXd&) { return g; };
  const int d = static_cast<int>(g.cols());
  op.hessian = [d, m = op.codim](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(m, Eigen::MatrixXd::Zero(d, d));
  };
  op.sup_jac = operator_norm(g);
  op.sup_hess = 0.0;
  // |G|_inf interpreted on the probe ball.
  op.sup_value = op.sup_jac * probe_radius;
  return op;
}

BayesPosteriorTarget::ForwardOperator BayesPosteriorTarget::tanh_op(int d) {
  ForwardOperator op;
  op.name = "tanh";
  op.codim = d;
  op.value = [](const Eigen::VectorXd& x) { return x.array().tanh().matrix().eval(); };
  op.jacobian = [](const Eigen::VectorXd& x) {
    const Eigen::ArrayXd s = 1.0 - x.array().tanh().square();
    return Eigen::MatrixXd(s.matrix().asDiagonal());
  };
  op.hessian = [d](const Eigen::VectorXd& x) {
    std::vector<Eigen::MatrixXd> h(d, Eigen::MatrixXd::Zero(d, d));
    for (int k = 0; k < d; ++k) {
      const double tk = std::tanh(x[k]);
      h[k](k, k) = -2.0 * tk * (1.0 - tk * tk);
    }
    return h;
  };
  op.sup_value = std::sqrt(static_cast<double>(d));
  op.sup_jac = 1.0;
  // max |2 tanh sech^2| = 4/(3 sqrt 3)
  op.sup_hess = 4.0 / (3.0 * std::sqrt(3.0));
  return op;
}

BayesPosteriorTarget::ForwardOperator BayesPosteriorTarget::constant_op(Eigen::VectorXd value,
                                                                        int d) {
  ForwardOperator op;
  op.name = "constant";
  op.codim = static_cast<int>(value.size());
  op.value = [value](const Eigen::VectorXd&) { return value; };
  op.jacobian = [m = op.codim, d](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Zero(m, d).eval();
  };
  op.hessian = [m = op.codim, d](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(m, Eigen::MatrixXd::Zero(d, d));
  };
  op.sup_value = value.norm();
  op.sup_jac = 0.0;
  op.sup_hess = 0.0;
  return op;
}

BayesPosteriorTarget::BayesPosteriorTarget(Eigen::MatrixXd c_prior, ForwardOperator g,
                                           Eigen::MatrixXd sigma, Eigen::VectorXd y)
    : op_(std::move(g)), sigma_(std::move(sigma)), y_(std::move(y)) {
  if (!is_spd(sigma_)) throw std::domain_error("bayes: noise covariance must be SPD");
  if (y_.size() != op_.codim) throw ConfigError("bayes: observation dimension mismatch");
  init_pair(c_prior, c_prior);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
  sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(sigma_.rows(), sigma_.cols()));

  const double norm_c = operator_norm(c_ref_);
  const double misfit = op_.sup_value + y_.norm();
  const double sigma_inv_norm = operator_norm(sigma_inv_);
  norms_.grad_h = sigma_inv_norm * op_.sup_jac * misfit;
  norms_.grad_h_sqrt_c = std::sqrt(norm_c) * norms_.grad_h;
  norms_.hess_h = sigma_inv_norm * (op_.sup_jac * op_.sup_jac + op_.sup_hess * misfit);
  norms_.hess_h_c = norm_c * norms_.hess_h;
  norms_.analytic = true;
}

double BayesPosteriorTarget::log_density(const Eigen::VectorXd& x) const {
  return Target::log_density(x);
}

double BayesPosteriorTarget::h(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd r = op_.value(x) - y_;
  return -0.5 * r.dot(sigma_inv_ * r);
}

Eigen::VectorXd BayesPosteriorTarget::grad_h(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd r = op_.value(x) - y_;
  return -op_.jacobian(x).transpose() * (sigma_inv_ * r);
}

Eigen::MatrixXd BayesPosteriorTarget::hess_h(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd r = op_.value(x) - y_;
  const Eigen::MatrixXd j = op_.jacobian(x);
  const Eigen::VectorXd w = sigma_inv_ * r;
  Eigen::MatrixXd hess = -j.transpose() * sigma_inv_ * j;
  const auto hg = op_.hessian(x);
  for (int k = 0; k < op_.codim; ++k) hess -= w[k] * hg[k];
  return hess;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> BayesPosteriorTarget::linear_posterior() const {
  if (!op_.linear) throw UnsupportedFamilyError("bayes_posterior: nonlinear forward operator");
  const Eigen::MatrixXd& g = op_.matrix;
  Eigen::LLT<Eigen::MatrixXd> llt_c(c_ref_);
  const Eigen::MatrixXd c_inv = llt_c.solve(Eigen::MatrixXd::Identity(dim(), dim()));
  const Eigen::MatrixXd prec = c_inv + g.transpose() * sigma_inv_ * g;
  Eigen::LLT<Eigen::MatrixXd> llt_p(prec);
  const Eigen::MatrixXd cov = llt_p.solve(Eigen::MatrixXd::Identity(dim(), dim()));
  const Eigen::VectorXd mean = cov * (g.transpose() * (sigma_inv_ * y_));
  return {mean, cov};
}

Eigen::VectorXd BayesPosteriorTarget::mean() const {
  if (op_.linear || op_.name == "constant") {
    if (op_.linear) return linear_posterior().first;
    return Eigen::VectorXd::Zero(dim());  // prior mean; constant G carries no information
  }
  if (dim() <= 3) return grid_posterior_oracle().mean;
  throw UnsupportedFamilyError("bayes_posterior: mean needs d <= 3 or a linear operator");
}

MomentSummary BayesPosteriorTarget::moments() const {
  MomentSummary m;
  if (op_.linear) {
    auto [mu, cov] = linear_posterior();
    m.m2 = mu.squaredNorm() + cov.trace();
  } else if (op_.name == "constant") {
    m.m2 = c_ref_.trace();
  } else if (dim() <= 3) {
    const auto oracle = grid_posterior_oracle();
    m.m2 = oracle.mean.squaredNorm() + oracle.cov.trace();
  } else {
    throw ConfigError("bayes_posterior: moments need d <= 3 or a linear operator; use moments_mc");
  }
  m.tr_c = c_ref_.trace();
  m.m0 = std::max(m.m2, m.tr_c);
  return m;
}

Eigen::MatrixXd BayesPosteriorTarget::sample_impl(int n, std::uint64_t seed,
                                             StreamPurpose purpose) const {
  const int d = dim();
  if (op_.linear || op_.name == "constant") {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd cov = c_ref_;
    if (op_.linear) std::tie(mu, cov) = linear_posterior();
    const Eigen::MatrixXd chol = cholesky_of(cov, "bayes posterior covariance");
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i) {
      CounterRng rng(seed, purpose, 2ull * static_cast<std::uint64_t>(i));
      Eigen::VectorXd z(d);
      rng.fill_normal(z);
      out.row(i) = (mu + chol * z).transpose();
    }
    return out;
  }
  if (d > 3)
    throw UnsupportedFamilyError(
        "bayes_posterior: grid-inversion sampling supports d <= 3 only");

  // Categorical over grid nodes plus an in-cell jitter.
  const int pts = d <= 2 ? 401 : 161;
  const double half_width = 6.0 * std::sqrt(operator_norm(c_ref_));
  const double spacing = 2.0 * half_width / (pts - 1);
  long total = 1;
  for (int k = 0; k < d; ++k) total *= pts;
  std::vector<double> cdf(static_cast<std::size_t>(total));
  Eigen::VectorXd x(d);
  double running = 0;
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int k = 0; k < d; ++k) {
      x[k] = -half_width + spacing * (rem % pts);
      rem /= pts;
    }
    running += std::exp(log_density(x));
    cdf[static_cast<std::size_t>(idx)] = running;
  }
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    CounterRng uniforms(seed, purpose, 2ull * static_cast<std::uint64_t>(i) + 1);
    const double u = uniforms.uniform(0) * running;
    const long idx = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    long rem = std::min<long>(idx, total - 1);
    for (int k = 0; k < d; ++k) {
      const double node = -half_width + spacing * (rem % pts);
      rem /= pts;
      out(i, k) = node + spacing * (uniforms.uniform(1 + k) - 0.5);
    }
  }
  return out;
}

std::optional<MixtureView> BayesPosteriorTarget::mixture_view() const {
  if (op_.linear) {
    auto [mu, cov] = linear_posterior();
    return MixtureView{{1.0, mu, cov}};
  }
  if (op_.name == "constant")
    return MixtureView{{1.0, Eigen::VectorXd::Zero(dim()), c_ref_}};
  return std::nullopt;
}

BayesPosteriorTarget::GridOracle BayesPosteriorTarget::grid_posterior_oracle(
    int points_per_axis, double half_width_sigmas) const {
  const int d = dim();
  if (d > 3) throw UnsupportedFamilyError("bayes_posterior: grid oracle supports d <= 3");
  const double half_width = half_width_sigmas * std::sqrt(operator_norm(c_ref_));
  const double spacing = 2.0 * half_width / (points_per_axis - 1);
  long total = 1;
  for (int k = 0; k < d; ++k) total *= points_per_axis;

  double norm = 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd x(d);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      const int ik = static_cast<int>(rem % points_per_axis);
      rem /= points_per_axis;
      x[k] = -half_width + spacing * ik;
      if (ik == 0 || ik == points_per_axis - 1) w *= 0.5;
    }
    const double p = w * std::exp(log_density(x));
    norm += p;
    mean += p * x;
    second += p * (x * x.transpose());
  }
  GridOracle oracle;
  oracle.mean = mean / norm;
  oracle.cov = second / norm - oracle.mean * oracle.mean.transpose();
  oracle.points_per_axis = points_per_axis;
  oracle.spacing = spacing;
  return oracle;
}

// ------------------------------------------------------------- assumptions --

AssumptionReport validate_assumptions(const Target& target, const AssumptionProbeSpec& spec) {
  if (spec.points <= 0) throw ConfigError("validate_assumptions: probe grid must be nonempty");
  AssumptionReport report;
  report.cached = target.sup_norms();

  const int d = target.dim();
  const double radius =
      spec.radius > 0 ? spec.radius : 6.0 * std::sqrt(operator_norm(target.envelope()));
  const Eigen::MatrixXd probe = probe_ball(spec.points - 1, d, radius);
  const Eigen::MatrixXd sqrt_c = spd_sqrt(target.reference_cov());

  double worst_margin = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < probe.rows(); ++i) {
    const Eigen::VectorXd x = probe.row(i).transpose();
    const double g = (sqrt_c * target.grad_h(x)).norm();
    const double hn = operator_norm(target.reference_cov() * target.hess_h(x));
    report.probed_grad_sqrt_c = std::max(report.probed_grad_sqrt_c, g);
    report.probed_hess_c = std::max(report.probed_hess_c, hn);
    const double margin = std::max(g - report.cached.grad_h_sqrt_c, hn - report.cached.hess_h_c);
    if (margin > worst_margin) {
      worst_margin = margin;
      report.worst_point = x;
    }
  }

  report.commutator = commutator_norm(target.envelope(), target.reference_cov());
  report.commutator_bound = spec.commutator_tol * operator_norm(target.envelope()) *
                            operator_norm(target.reference_cov());

  const double slack = 1e-9;
  const bool norms_ok =
      report.probed_grad_sqrt_c <= report.cached.grad_h_sqrt_c * (1 + slack) + slack &&
      report.probed_hess_c <= report.cached.hess_h_c * (1 + slack) + slack;
  const bool commute_ok = report.commutator <= std::max(report.commutator_bound, 1e-300);
  const bool finite_ok = std::isfinite(report.probed_grad_sqrt_c) &&
                         std::isfinite(report.probed_hess_c) &&
                         std::isfinite(report.cached.grad_h_sqrt_c) &&
                         std::isfinite(report.cached.hess_h_c);
  report.pass = norms_ok && commute_ok && finite_ok;
  std::ostringstream notes;
  if (!report.cached.analytic) notes << "caches are probed values with margin (convention); ";
  if (!norms_ok) notes << "probed sup-norm exceeds cache; ";
  if (!commute_ok) notes << "(A,C) commutator above tolerance; ";
  report.notes = notes.str();
  return report;
}

MomentSummary moments_mc(const Target& target, int budget, std::uint64_t seed) {
  if (budget <= 0) throw ConfigError("moments_mc: sample budget must be positive");
  const Eigen::MatrixXd xs = target.sample(budget, seed, StreamPurpose::Generic);
  MomentSummary m;
  CompensatedSum sum, sum_sq;
  for (int i = 0; i < xs.rows(); ++i) {
    const double v = xs.row(i).squaredNorm();
    sum.add(v);
    sum_sq.add(v * v);
  }
  m.m2 = sum.value() / budget;
  const double var = std::max(0.0, sum_sq.value() / budget - m.m2 * m.m2);
  m.std_err = std::sqrt(var / budget);
  m.tr_c = target.reference_cov().trace();
  m.m0 = std::max(m.tr_c, m.m2);
  return m;
}

}  // namespace flowlab
