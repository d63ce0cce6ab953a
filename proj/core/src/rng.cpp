#include "flowlab/rng.hpp"

#include <stdexcept>
#include <vector>

namespace flowlab {

namespace {

std::vector<int> first_primes(int d) {
  std::vector<int> primes;
  int candidate = 2;
  while (static_cast<int>(primes.size()) < d) {
    bool is_prime = true;
    for (int p : primes) {
      if (p * p > candidate) break;
      if (candidate % p == 0) {
        is_prime = false;
        break;
      }
    }
    if (is_prime) primes.push_back(candidate);
    ++candidate;
  }
  return primes;
}

double radical_inverse(int base, int index) {
  double inv = 1.0 / base, f = inv, value = 0.0;
  while (index > 0) {
    value += f * (index % base);
    index /= base;
    f *= inv;
  }
  return value;
}

// Acklam-style rational approximation of the standard normal quantile.
double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p <= 0.0 || p >= 1.0) throw std::domain_error("normal_quantile: p outside (0,1)");
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) return -normal_quantile(1.0 - p);
  const double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

Eigen::MatrixXd halton_points(int n, int d) {
  const auto primes = first_primes(d);
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = radical_inverse(primes[j], i + 1);
  return pts;
}

Eigen::MatrixXd probe_ball(int n, int d, double radius) {
  // Map Halton points through the Gaussian quantile, then rescale the radius
  // with a uniform^{1/d} law so the cloud fills the ball.
  Eigen::MatrixXd u = halton_points(n, d + 1);
  Eigen::MatrixXd pts = Eigen::MatrixXd::Zero(n + 1, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd g(d);
    for (int j = 0; j < d; ++j) {
      double v = std::min(std::max(u(i, j), 1e-12), 1.0 - 1e-12);
      g[j] = normal_quantile(v);
    }
    const double norm = g.norm();
    if (norm == 0.0) continue;
    const double r = radius * std::pow(u(i, d), 1.0 / d);
    pts.row(i + 1) = (r / norm) * g.transpose();
  }
  return pts;
}

}  // namespace flowlab
