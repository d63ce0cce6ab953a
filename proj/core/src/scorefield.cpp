#include "flowlab/scorefield.hpp"

#include <cmath>
#include <sstream>

namespace flowlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093455;
constexpr double kTimeEps = 1e-14;

// 15-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr int kGlPoints = 15;
constexpr double kGlNode[kGlPoints] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272, -0.7244177313601701,
    -0.5709721726085388, -0.3941513470775634, -0.2011940939974345, 0.0,
    0.2011940939974345,  0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
constexpr double kGlWeight[kGlPoints] = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719, 0.1395706779261543,
    0.1662692058169939, 0.1861610000155622, 0.1984314853271116, 0.2025782419255613,
    0.1984314853271116, 0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

}  // namespace

Eigen::MatrixXd KernelMatrices::abar_matrix() const {
  return basis->q * abar.asDiagonal() * basis->q.transpose();
}
Eigen::MatrixXd KernelMatrices::k_matrix() const {
  return basis->q * k.asDiagonal() * basis->q.transpose();
}
Eigen::MatrixXd KernelMatrices::b_matrix() const {
  return basis->q * b.asDiagonal() * basis->q.transpose();
}

KernelMatrices kernel_matrices(double t, const CommutingPair& pair) {
  if (t < 0 || t > 1) throw std::domain_error("kernel_matrices: t outside [0,1]");
  KernelMatrices km;
  km.t = t;
  km.basis = &pair;
  const int d = pair.dim();
  km.abar.resize(d);
  km.k.resize(d);
  km.b.resize(d);
  for (int i = 0; i < d; ++i) {
    km.abar[i] = pair.a[i] * t * t + pair.c[i] * (1 - t * t);
    km.k[i] = pair.a[i] / km.abar[i] * t;
    km.b[i] = pair.a[i] / km.abar[i] * (1 - t * t);
  }
  return km;
}

MixtureView forward_marginal_params(const Target& target, double s) {
  if (s < 0 || s > 1) throw std::domain_error("forward_marginal_params: s outside [0,1]");
  const auto view = target.mixture_view();
  if (!view)
    throw UnsupportedFamilyError("forward_marginal_params: target has no closed-form marginals (" +
                                 target.family() + ")");
  MixtureView out;
  const Eigen::MatrixXd& c = target.reference_cov();
  for (const auto& comp : *view)
    out.push_back({comp.weight, (1 - s) * comp.mean,
                   (1 - s) * (1 - s) * comp.cov + s * (2 - s) * c});
  return out;
}

Eigen::MatrixXd sample_forward_marginal(const Target& target, double s, int n,
                                        std::uint64_t seed, StreamPurpose purpose) {
  const auto comps = forward_marginal_params(target, s);
  const int d = target.dim();
  std::vector<double> cumulative;
  std::vector<Eigen::MatrixXd> chols;
  double acc = 0;
  for (const auto& c : comps) {
    acc += c.weight;
    cumulative.push_back(acc);
    Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("sample_forward_marginal: singular component covariance");
    chols.push_back(llt.matrixL());
  }
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i) {
    CounterRng normals(seed, purpose, 2ull * static_cast<std::uint64_t>(i));
    CounterRng uniforms(seed, purpose, 2ull * static_cast<std::uint64_t>(i) + 1);
    int c = static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(),
                                              uniforms.uniform(0) * acc) -
                             cumulative.begin());
    c = std::min<int>(c, static_cast<int>(comps.size()) - 1);
    Eigen::VectorXd z(d);
    normals.fill_normal(z);
    out.row(i) = (comps[c].mean + chols[c] * z).transpose();
  }
  return out;
}

// ----------------------------------------------------------- VelocityField --

VelocityField::VelocityField(TargetPtr target, FlowKind kind, EvalMode mode,
                             QuadratureOptions opts)
    : target_(std::move(target)), kind_(kind), mode_(mode), opts_(opts) {
  const auto view = target_->mixture_view();
  closed_form_ok_ = view.has_value();
  if (mode_ == EvalMode::ClosedForm && !closed_form_ok_)
    throw UnsupportedFamilyError("closed-form velocity needs a Gaussian/mixture/linear-posterior target (" +
                                 target_->family() + ")");
  if (mode_ == EvalMode::Quadrature && opts_.budget < 1000)
    throw ConfigError("quadrature budget must be at least 1000");
  if (closed_form_ok_) base_components_ = *view;
  if (kind_ == FlowKind::Follmer) {
    kernel_pair_ = target_->basis();
  } else {
    const int d = target_->dim();
    kernel_pair_ = make_commuting_pair(target_->envelope(), Eigen::MatrixXd::Identity(d, d));
  }
}

Eigen::MatrixXd VelocityField::initial_cov() const {
  if (kind_ == FlowKind::Follmer) return target_->reference_cov();
  return Eigen::MatrixXd::Identity(dim(), dim());
}

Eigen::MatrixXd VelocityField::score_premultiplier() const {
  if (kind_ == FlowKind::Follmer) return target_->reference_cov();
  return Eigen::MatrixXd::Identity(dim(), dim());
}

MixtureView VelocityField::backward_components(double t) const {
  MixtureView out;
  const int d = dim();
  const Eigen::MatrixXd base = (kind_ == FlowKind::Follmer)
                                   ? ((1 - t * t) * target_->reference_cov()).eval()
                                   : ((1 - t) * (1 - t) * Eigen::MatrixXd::Identity(d, d)).eval();
  for (const auto& comp : base_components_)
    out.push_back({comp.weight, t * comp.mean, t * t * comp.cov + base});
  return out;
}

// The per-component velocity is affine, V_i(x) = M_i x + b_i, with the
// cancellation against the envelope done symbolically:
//   score flow:         M_i = t (Sigma_i - C) Lambda_i,        b_i = C Lambda_i m_i
//   interpolation flow: M_i = (t Sigma_i - (1-t) I) Lambda_i,  b_i = (1-t) Lambda_i m_i
// so an invariant target gives exact zeros instead of (x - x)/t roundoff.
VelocityField::Prepared VelocityField::prepare(double t) const {
  if (t < 0 || t > 1) throw std::domain_error("velocity: t outside [0,1]");
  Prepared prep;
  prep.field_ = this;
  prep.t_ = t;
  if (mode_ != EvalMode::ClosedForm || t <= kTimeEps) return prep;

  const int d = dim();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
  const auto marginals = backward_components(t);
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    const auto& marginal = marginals[i];
    const auto& base = base_components_[i];
    Prepared::Component pc;
    pc.mean = marginal.mean;
    Eigen::LLT<Eigen::MatrixXd> llt(marginal.cov);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("velocity: singular marginal covariance at t=" + std::to_string(t));
    pc.chol = llt.matrixL();
    pc.precision = llt.solve(identity);
    double log_det = 0;
    for (int j = 0; j < d; ++j) log_det += std::log(pc.chol(j, j));
    pc.log_weight_norm = std::log(marginal.weight) - log_det - 0.5 * d * kLog2Pi;
    if (kind_ == FlowKind::Follmer) {
      pc.gain = (t * (base.cov - target_->reference_cov())).eval();
      pc.shift = target_->reference_cov() * (pc.precision * base.mean);
    } else {
      pc.gain = (t * base.cov - (1 - t) * identity).eval();
      pc.shift = (1 - t) * (pc.precision * base.mean);
    }
    pc.affine = pc.gain * pc.precision;
    prep.components_.push_back(std::move(pc));
  }
  return prep;
}

Eigen::VectorXd VelocityField::responsibilities(const Prepared& prep,
                                                const Eigen::VectorXd& x) const {
  const int k = static_cast<int>(prep.components_.size());
  Eigen::VectorXd lw(k);
  for (int i = 0; i < k; ++i) {
    const auto& c = prep.components_[i];
    const Eigen::VectorXd z = c.chol.template triangularView<Eigen::Lower>().solve(x - c.mean);
    lw[i] = c.log_weight_norm - 0.5 * z.squaredNorm();
  }
  const double m = lw.maxCoeff();
  return (lw.array() - (m + std::log((lw.array() - m).exp().sum()))).exp();
}

Eigen::VectorXd VelocityField::Prepared::velocity(const Eigen::VectorXd& x,
                                                  const StreamHint& hint,
                                                  double* ess_out) const {
  if (ess_out) *ess_out = std::numeric_limits<double>::quiet_NaN();
  if (t_ <= kTimeEps) {
    const Eigen::VectorXd m = field_->target_->mean();
    return field_->kind_ == FlowKind::Follmer ? m : (m - x).eval();
  }
  if (field_->mode_ != EvalMode::ClosedForm)
    return field_->velocity_quadrature(t_, x, hint, ess_out);

  if (components_.size() == 1) {
    const auto& c = components_[0];
    return c.affine * x + c.shift;
  }
  const Eigen::VectorXd r = field_->responsibilities(*this, x);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    v += r[static_cast<Eigen::Index>(i)] * (c.affine * x + c.shift);
  }
  return v;
}

Eigen::VectorXd VelocityField::velocity(double t, const Eigen::VectorXd& x,
                                        const StreamHint& hint) const {
  if (!x.allFinite()) throw std::domain_error("velocity: non-finite evaluation point");
  if (t < 0 || t > 1) throw std::domain_error("velocity: t outside [0,1]");
  if (t <= kTimeEps) {
    const Eigen::VectorXd m = target_->mean();
    return kind_ == FlowKind::Follmer ? m : (m - x).eval();
  }
  if (mode_ == EvalMode::ClosedForm) return prepare(t).velocity(x);
  return velocity_quadrature(t, x, hint, nullptr);
}

Eigen::VectorXd VelocityField::score(double t, const Eigen::VectorXd& x,
                                     const StreamHint& hint) const {
  return t * velocity(t, x, hint) - x;
}

ModifiedScoreResult VelocityField::modified_score_quadrature(double t, const Eigen::VectorXd& x,
                                                             const StreamHint& hint) const {
  if (!(t > 0) || t > 1) throw std::domain_error("modified_score_quadrature: t outside (0,1]");
  if (opts_.budget < 1000) throw ConfigError("modified_score_quadrature: budget below 1000");
  const int d = dim();
  const CommutingPair& pair = kernel_pair_;
  const bool follmer = kind_ == FlowKind::Follmer;

  // Proposal N(K_t W x, B_t) with W the whitening of the reference covariance;
  // weights exp(h(sqrt(C) y)). Everything is formed in the shared eigenbasis.
  Eigen::VectorXd abar(d), k(d), b(d);
  for (int i = 0; i < d; ++i) {
    const double a = pair.a[i];
    if (follmer) {
      abar[i] = a * t * t + pair.c[i] * (1 - t * t);
      b[i] = a / abar[i] * (1 - t * t);
    } else {
      abar[i] = a * t * t + (1 - t) * (1 - t);
      b[i] = a / abar[i] * (1 - t) * (1 - t);
    }
    k[i] = a / abar[i] * t;
  }
  bool regularized = false;
  for (int i = 0; i < d; ++i) {
    if (b[i] < opts_.bt_regularization) {
      b[i] += opts_.bt_regularization;
      regularized = true;
    }
  }

  const Eigen::VectorXd xe = pair.q.transpose() * x;
  Eigen::VectorXd mean_e(d), sqrt_b(d), sqrt_c(d);
  for (int i = 0; i < d; ++i) {
    const double w = follmer ? 1.0 / std::sqrt(pair.c[i]) : 1.0;
    mean_e[i] = k[i] * w * xe[i];
    sqrt_b[i] = std::sqrt(b[i]);
    sqrt_c[i] = follmer ? std::sqrt(pair.c[i]) : 1.0;
  }

  const std::uint64_t stream = hint.active ? hint.id : hash_point(t, x);
  CounterRng rng(opts_.seed, StreamPurpose::Quadrature, stream);

  // Antithetic pairs around the proposal mean; the weight and integrand are
  // near-linear in the draw over the proposal scale, so the odd error terms
  // cancel.
  const int m = opts_.budget;
  Eigen::VectorXd log_w(m);
  Eigen::MatrixXd grads(m, d);
  Eigen::VectorXd z(d), y(d), arg(d);
  std::uint64_t idx = 0;
  for (int j = 0; j < m; ++j) {
    if ((j & 1) == 0) {
      for (int i = 0; i < d; ++i) z[i] = rng.normal(idx++);
    } else {
      z = -z;
    }
    y = mean_e + sqrt_b.cwiseProduct(z);
    arg = pair.q * sqrt_c.cwiseProduct(y);
    log_w[j] = target_->h(arg);
    grads.row(j) = target_->grad_h(arg).transpose();
  }
  const double lw_max = log_w.maxCoeff();
  Eigen::VectorXd w = (log_w.array() - lw_max).exp();
  const double w_sum = w.sum();
  w /= w_sum;
  const double ess = 1.0 / w.squaredNorm();
  if (ess < opts_.ess_floor) {
    std::ostringstream os;
    os << "modified_score_quadrature: importance weights degenerate (ess=" << ess
       << ", budget=" << m << ", t=" << t << ", |x|=" << x.norm() << ")";
    throw DegeneracyError(os.str());
  }

  const Eigen::VectorXd avg_grad = grads.transpose() * w;
  // S~ = K_t sqrt(C) E_w[grad h]
  const Eigen::VectorXd se = k.cwiseProduct(sqrt_c.cwiseProduct(pair.q.transpose() * avg_grad));
  ModifiedScoreResult res;
  res.value = pair.q * se;
  res.ess = ess;
  res.regularized = regularized;
  return res;
}

Eigen::VectorXd VelocityField::velocity_quadrature(double t, const Eigen::VectorXd& x,
                                                   const StreamHint& hint,
                                                   double* ess_out) const {
  const auto ms = modified_score_quadrature(t, x, hint);
  if (ess_out) *ess_out = ms.ess;
  const CommutingPair& pair = kernel_pair_;
  const int d = dim();
  const Eigen::VectorXd xe = pair.q.transpose() * x;
  Eigen::VectorXd corr(d);
  for (int i = 0; i < d; ++i) {
    const double a = pair.a[i];
    if (kind_ == FlowKind::Follmer) {
      const double abar = a * t * t + pair.c[i] * (1 - t * t);
      corr[i] = (a - pair.c[i]) * t / abar;
    } else {
      const double ahat = a * t * t + (1 - t) * (1 - t);
      corr[i] = ((a + 1) * t - 1) / ahat;
    }
  }
  const double gain = kind_ == FlowKind::Follmer ? 1.0 : 1.0 - t;
  return gain * ms.value / t + pair.q * corr.cwiseProduct(xe);
}

SpatialJacobian VelocityField::jacobian(double t, const Eigen::VectorXd& x,
                                        const StreamHint& hint) const {
  if (t < 0 || t > 1) throw std::domain_error("jacobian: t outside [0,1]");
  const int d = dim();
  SpatialJacobian out;
  if (t <= kTimeEps) {
    out.value = kind_ == FlowKind::Follmer ? Eigen::MatrixXd::Zero(d, d).eval()
                                           : (-Eigen::MatrixXd::Identity(d, d)).eval();
    return out;
  }
  if (mode_ == EvalMode::ClosedForm) {
    const Prepared prep = prepare(t);
    if (prep.components_.size() == 1) {
      out.value = prep.components_[0].affine;
      return out;
    }
    const Eigen::VectorXd r = responsibilities(prep, x);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd gbar = Eigen::VectorXd::Zero(d);
    std::vector<Eigen::VectorXd> g(prep.components_.size()), v(prep.components_.size());
    for (std::size_t i = 0; i < prep.components_.size(); ++i) {
      const auto& c = prep.components_[i];
      g[i] = -(c.precision * (x - c.mean));
      v[i] = c.affine * x + c.shift;
      gbar += r[static_cast<Eigen::Index>(i)] * g[i];
      j += r[static_cast<Eigen::Index>(i)] * c.affine;
    }
    for (std::size_t i = 0; i < prep.components_.size(); ++i)
      j += r[static_cast<Eigen::Index>(i)] * v[i] * (g[i] - gbar).transpose();
    out.value = j;
    return out;
  }
  // Central differences with shared quadrature randomness.
  const double eta = 1e-5 * (1.0 + x.norm());
  if (eta == 0.0 || !std::isfinite(eta))
    throw ConfigError("jacobian: finite-difference step underflow");
  StreamHint shared = hint;
  if (!shared.active) shared = StreamHint{hash_point(t, x), true};
  out.fd_step = eta;
  out.value.resize(d, d);
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += eta;
    xm[j] -= eta;
    out.value.col(j) = (velocity_quadrature(t, xp, shared, nullptr) -
                        velocity_quadrature(t, xm, shared, nullptr)) /
                       (2 * eta);
  }
  return out;
}

TimeDerivative VelocityField::time_derivative(double t, const Eigen::VectorXd& x,
                                              const StreamHint& hint) const {
  if (t < 0 || t >= 1) throw std::domain_error("time_derivative: t outside [0,1)");
  const int d = dim();
  TimeDerivative out;

  if (mode_ != EvalMode::ClosedForm) {
    const double eta_t = std::min(1e-4, (1 - t) / 10);
    StreamHint shared = hint;
    if (!shared.active) shared = StreamHint{hash_point(t, x), true};
    out.fd_step = eta_t;
    if (eta_t <= 0 || !std::isfinite(eta_t))
      throw ConfigError("time_derivative: finite-difference step underflow");
    if (t >= eta_t)
      out.value = (velocity(t + eta_t, x, shared) - velocity(t - eta_t, x, shared)) / (2 * eta_t);
    else
      out.value = (velocity(t + eta_t, x, shared) - velocity(t, x, shared)) / eta_t;
    return out;
  }

  // d/dt of V = sum_i r_i (M_i x + b_i): responsibilities move with the
  // marginal densities, the affine parts with the kernel matrices.
  const double tt = std::max(t, kTimeEps);
  const Prepared prep = prepare(tt);
  const Eigen::VectorXd r = responsibilities(prep, x);
  const int k = static_cast<int>(prep.components_.size());
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd dlogphi(k);
  std::vector<Eigen::VectorXd> v(k), vdot(k);
  for (int i = 0; i < k; ++i) {
    const auto& c = prep.components_[i];
    const auto& base = base_components_[static_cast<std::size_t>(i)];
    Eigen::MatrixXd cov_dot, gain_dot;
    if (kind_ == FlowKind::Follmer) {
      cov_dot = 2 * tt * (base.cov - target_->reference_cov());
      gain_dot = base.cov - target_->reference_cov();
    } else {
      cov_dot = (2 * tt * base.cov - 2 * (1 - tt) * identity).eval();
      gain_dot = (base.cov + identity).eval();
    }
    const Eigen::VectorXd diff = x - c.mean;
    const Eigen::VectorXd pd = c.precision * diff;
    dlogphi[i] = -0.5 * (c.precision * cov_dot).trace() + pd.dot(base.mean) +
                 0.5 * pd.dot(cov_dot * pd);
    v[i] = c.affine * x + c.shift;

    // d/dt precision = -Lambda cov_dot Lambda
    const Eigen::MatrixXd prec_dot = -(c.precision * cov_dot * c.precision);
    Eigen::MatrixXd m_dot = gain_dot * c.precision + c.gain * prec_dot;
    Eigen::VectorXd b_dot;
    if (kind_ == FlowKind::Follmer)
      b_dot = target_->reference_cov() * (prec_dot * base.mean);
    else
      b_dot = -(c.precision * base.mean) + (1 - tt) * (prec_dot * base.mean);
    vdot[i] = m_dot * x + b_dot;
  }
  const double mean_dlogphi = r.dot(dlogphi);
  Eigen::VectorXd dv = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < k; ++i)
    dv += r[i] * ((dlogphi[i] - mean_dlogphi) * v[i] + vdot[i]);
  out.value = dv;
  return out;
}

Eigen::VectorXd VelocityField::averaged_velocity(const Eigen::VectorXd& x, double r, double t,
                                                 double* err_estimate) const {
  if (!(r >= 0) || !(t <= 1) || r >= t)
    throw std::domain_error("averaged_velocity: need 0 <= r < t <= 1");
  const int d = dim();

  auto gl = [&](double lo, double hi) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (int i = 0; i < kGlPoints; ++i)
      acc += kGlWeight[i] * velocity(mid + half * kGlNode[i], x);
    return (half * acc).eval();
  };

  struct Frame {
    double lo, hi;
    int depth;
  };
  Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
  double err = 0;
  std::vector<Frame> stack{{r, t, 0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const Eigen::VectorXd whole = gl(f.lo, f.hi);
    const double mid = 0.5 * (f.lo + f.hi);
    const Eigen::VectorXd halves = gl(f.lo, mid) + gl(mid, f.hi);
    const double diff = (whole - halves).norm();
    if (diff < 1e-10 * (1 + halves.norm()) || f.depth >= 12) {
      total += halves;
      err += diff;
    } else {
      stack.push_back({f.lo, mid, f.depth + 1});
      stack.push_back({mid, f.hi, f.depth + 1});
    }
  }
  if (err_estimate) *err_estimate = err / (t - r);
  return total / (t - r);
}

}  // namespace flowlab
