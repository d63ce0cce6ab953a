#include "flowlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace flowlab {

namespace {

double pairwise_sum(const double* v, int n) {
  if (n <= 16) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const int half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

double squared_distance(const Eigen::MatrixXd& a, int i, const Eigen::MatrixXd& b, int j,
                        double* buf) {
  const int d = static_cast<int>(a.cols());
  for (int k = 0; k < d; ++k) {
    const double diff = a(i, k) - b(j, k);
    buf[k] = diff * diff;
  }
  return pairwise_sum(buf, d);
}

}  // namespace

// Dual-updating shortest augmenting path (Jonker-Volgenant style) with a
// column-reduction warm start. Exact for finite costs.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
  std::vector<int> col4row(n, -1), row4col(n, -1), path(n, -1), remaining(n);
  std::vector<char> scanned_row(n), scanned_col(n);

  // Column reduction: v[j] = min_i cost(i,j); greedily assign zero-reduced
  // pairs. Keeps duals feasible and complementary.
  for (int j = 0; j < n; ++j) {
    double best = kInf;
    int arg = -1;
    for (int i = 0; i < n; ++i) {
      if (cost[static_cast<std::size_t>(i) * n + j] < best) {
        best = cost[static_cast<std::size_t>(i) * n + j];
        arg = i;
      }
    }
    v[j] = best;
    if (col4row[arg] == -1) {
      col4row[arg] = j;
      row4col[j] = arg;
    }
  }

  for (int cur_row = 0; cur_row < n; ++cur_row) {
    if (col4row[cur_row] != -1) continue;

    std::fill(shortest.begin(), shortest.end(), kInf);
    std::fill(scanned_row.begin(), scanned_row.end(), char(0));
    std::fill(scanned_col.begin(), scanned_col.end(), char(0));
    int num_remaining = n;
    for (int k = 0; k < n; ++k) remaining[k] = k;

    double min_val = 0;
    int i = cur_row;
    int sink = -1;
    while (sink == -1) {
      scanned_row[i] = 1;
      double lowest = kInf;
      int index = -1;
      const double ui = u[i];
      const double* row = cost.data() + static_cast<std::size_t>(i) * n;
      for (int it = 0; it < num_remaining; ++it) {
        const int j = remaining[it];
        const double r = min_val + row[j] - ui - v[j];
        if (r < shortest[j]) {
          path[j] = i;
          shortest[j] = r;
        }
        if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == -1)) {
          lowest = shortest[j];
          index = it;
        }
      }
      min_val = lowest;
      if (!(min_val < kInf)) throw NumericError("solve_assignment: infeasible problem");
      const int j = remaining[index];
      if (row4col[j] == -1)
        sink = j;
      else
        i = row4col[j];
      scanned_col[j] = 1;
      remaining[index] = remaining[--num_remaining];
    }

    u[cur_row] += min_val;
    for (int r = 0; r < n; ++r)
      if (scanned_row[r] && r != cur_row) u[r] += min_val - shortest[col4row[r]];
    for (int j = 0; j < n; ++j)
      if (scanned_col[j]) v[j] -= min_val - shortest[j];

    int j = sink;
    while (true) {
      const int r = path[j];
      row4col[j] = r;
      std::swap(col4row[r], j);
      if (r == cur_row) break;
    }
  }
  return col4row;
}

TransportPlanResult w2_exact(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int workers) {
  if (a.cols() != b.cols()) throw std::domain_error("w2_exact: dimension mismatch");
  if (a.rows() != b.rows()) throw std::domain_error("w2_exact: particle counts differ");
  const int n = static_cast<int>(a.rows());
  if (n == 0) throw std::domain_error("w2_exact: empty batches");
  if (n > kExactAssignmentCap)
    throw ConfigError("w2_exact: batch exceeds the exact-solver cap (" +
                      std::to_string(kExactAssignmentCap) + "); use sliced_w2");

  const int d = static_cast<int>(a.cols());
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  parallel_for(n, workers, [&](int begin, int end) {
    std::vector<double> buf(d);
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < n; ++j)
        cost[static_cast<std::size_t>(i) * n + j] = squared_distance(a, i, b, j, buf.data());
  });

  TransportPlanResult result;
  result.assignment = solve_assignment(cost, n);
  CompensatedSum total;
  for (int i = 0; i < n; ++i)
    total.add(cost[static_cast<std::size_t>(i) * n + result.assignment[i]]);
  result.cost = total.value();
  result.w2 = std::sqrt(std::max(0.0, result.cost / n));
  return result;
}

double w2_gaussian_closed_form(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1,
                               const Eigen::VectorXd& m2, const Eigen::MatrixXd& s2) {
  if (!is_symmetric(s1, 1e-9) || !is_symmetric(s2, 1e-9))
    throw std::domain_error("w2_gaussian_closed_form: covariances must be symmetric");
  const Eigen::MatrixXd root1 = spd_sqrt(s1);  // throws on indefinite input
  const Eigen::MatrixXd inner = root1 * s2 * root1;
  const Eigen::MatrixXd cross = spd_sqrt(0.5 * (inner + inner.transpose()));
  const double bures = s1.trace() + s2.trace() - 2.0 * cross.trace();
  return std::sqrt((m1 - m2).squaredNorm() + std::max(0.0, bures));
}

double w2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) throw std::domain_error("w2_1d: sizes differ");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc.add(diff * diff);
  }
  return std::sqrt(acc.value() / static_cast<double>(a.size()));
}

SlicedResult sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int projections,
                       std::uint64_t seed) {
  if (projections < 16) throw ConfigError("sliced_w2: needs at least 16 projections");
  if (a.cols() != b.cols()) throw std::domain_error("sliced_w2: dimension mismatch");
  if (a.rows() != b.rows()) throw std::domain_error("sliced_w2: particle counts differ");
  const int d = static_cast<int>(a.cols());

  SlicedResult res;
  res.projections = projections;
  CompensatedSum sum, sum_sq;
  for (int l = 0; l < projections; ++l) {
    CounterRng rng(seed, StreamPurpose::Projection, static_cast<std::uint64_t>(l));
    Eigen::VectorXd dir(d);
    rng.fill_normal(dir);
    const double nrm = dir.norm();
    dir = nrm > 0 ? (dir / nrm).eval() : Eigen::VectorXd::Unit(d, 0).eval();
    const Eigen::VectorXd pa = a * dir;
    const Eigen::VectorXd pb = b * dir;
    const double w =
        w2_1d(std::vector<double>(pa.data(), pa.data() + pa.size()),
              std::vector<double>(pb.data(), pb.data() + pb.size()));
    sum.add(w);
    sum_sq.add(w * w);
  }
  res.value = sum.value() / projections;
  const double var = std::max(0.0, sum_sq.value() / projections - res.value * res.value);
  res.std_err = std::sqrt(var / projections);
  return res;
}

AuditProbeSpec default_audit_probe() {
  AuditProbeSpec spec;
  for (int i = 1; i <= 20; ++i) spec.times.push_back(i / 20.0);
  spec.times.push_back(0.01);
  for (double t : {0.01, 0.1, 0.25, 0.4, 0.55, 0.7, 0.8, 0.9, 0.95, 0.99})
    spec.dt_times.push_back(t);
  return spec;
}

AuditReport regularity_audit(const VelocityField& field, const CoefficientSet& coeffs,
                             const AuditProbeSpec& spec, const Schedule& schedule,
                             const PerturbationModel* perturbation) {
  const int d = field.dim();
  const double radius =
      spec.radius > 0 ? spec.radius : 6.0 * std::sqrt(operator_norm(field.target().envelope()));
  const Eigen::MatrixXd probe = probe_ball(spec.points - 1, d, radius);
  const bool rectified = coeffs.variant == CoefficientVariant::Rectified;

  AuditReport report;
  const double tol = 1e-9;
  auto push = [&](const std::string& check, double t, double xn, double lhs, double rhs) {
    AuditRow row;
    row.check = check;
    row.t = t;
    row.x_norm = xn;
    row.lhs = lhs;
    row.rhs = rhs;
    row.margin = rhs - lhs;
    row.pass = lhs <= rhs + tol * std::max(1.0, std::abs(rhs));
    report.rows.push_back(row);
  };

  for (double t : spec.times) {
    for (int i = 0; i < probe.rows(); ++i) {
      const Eigen::VectorXd x = probe.row(i).transpose();
      const double xn = x.norm();
      const double vn = field.velocity(t, x).norm();
      const double growth_rhs =
          rectified ? coeffs.k0 + coeffs.k2 * xn : coeffs.k0 + coeffs.k2 * t * xn;
      push("velocity_growth", t, xn, vn, growth_rhs);
      const double jn = operator_norm(field.jacobian(t, x).value);
      const double grad_rhs =
          rectified ? coeffs.k1 * t + coeffs.k2 : (coeffs.k1 + coeffs.k2) * t;
      push("gradient", t, xn, jn, grad_rhs);
    }
  }
  for (double t : spec.dt_times) {
    if (t >= 1.0) throw std::domain_error("regularity_audit: dt probe grid must exclude t = 1");
    for (int i = 0; i < probe.rows(); ++i) {
      const Eigen::VectorXd x = probe.row(i).transpose();
      const double xn = x.norm();
      const double dvn = field.time_derivative(t, x).value.norm();
      const double rhs = coeffs.k5 * xn + coeffs.k6 / std::sqrt(1.0 - t * t) + coeffs.k7;
      push("time_derivative", t, xn, dvn, rhs);
    }
  }

  // Accumulated gradient budget of the (possibly perturbed) field.
  const int bp = std::min<int>(spec.budget_points, static_cast<int>(probe.rows()));
  CompensatedSum budget;
  for (int n = 0; n < schedule.steps(); ++n) {
    const double t = schedule.t[n];
    const double h = schedule.t[n + 1] - schedule.t[n];
    double worst = 0;
    for (int i = 0; i < bp; ++i) {
      const Eigen::VectorXd x = probe.row(i).transpose();
      Eigen::MatrixXd j = field.jacobian(t, x).value;
      if (perturbation && perturbation->kind() != PerturbKind::None)
        j += perturbation->grad(t, x);
      worst = std::max(worst, operator_norm(j));
    }
    budget.add(h * worst);
  }
  report.budget_lhs = budget.value();
  report.budget_rhs = coeffs.lipschitz_exponent() + coeffs.k8 / 2;
  report.budget_pass = report.budget_lhs <= report.budget_rhs + tol;

  report.pass = report.budget_pass;
  for (const auto& row : report.rows) report.pass = report.pass && row.pass;
  return report;
}

std::string AuditReport::to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "check,t,x_norm,lhs,rhs,margin,pass\n";
  for (const auto& r : rows)
    os << r.check << ',' << r.t << ',' << r.x_norm << ',' << r.lhs << ',' << r.rhs << ','
       << r.margin << ',' << (r.pass ? 1 : 0) << '\n';
  os << "gradient_budget,0,0," << budget_lhs << ',' << budget_rhs << ','
     << (budget_rhs - budget_lhs) << ',' << (budget_pass ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace flowlab
