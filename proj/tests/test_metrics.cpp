#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "flowlab/metrics.hpp"

using namespace flowlab;

namespace {

Eigen::MatrixXd ident(int d) { return Eigen::MatrixXd::Identity(d, d); }

double brute_force_cost(const std::vector<double>& cost, int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + perm[i]];
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double assignment_cost(const std::vector<double>& cost, const std::vector<int>& a, int n) {
  double total = 0;
  for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + a[i]];
  return total;
}

}  // namespace

TEST_CASE("assignment solver matches brute force on random instances") {
  CounterRng rng(2024, StreamPurpose::Generic, 0);
  std::uint64_t idx = 0;
  for (int n = 1; n <= 7; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<double> cost(static_cast<std::size_t>(n) * n);
      for (auto& c : cost) c = rng.uniform(idx++);
      const auto a = solve_assignment(cost, n);
      // valid permutation
      std::vector<char> seen(n, 0);
      for (int i = 0; i < n; ++i) {
        REQUIRE(a[i] >= 0);
        REQUIRE(a[i] < n);
        REQUIRE(!seen[a[i]]);
        seen[a[i]] = 1;
      }
      CHECK(assignment_cost(cost, a, n) == doctest::Approx(brute_force_cost(cost, n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("w2_exact basics") {
  Eigen::MatrixXd a(3, 2);
  a << 0, 0, 1, 1, -2, 0.5;
  const auto same = w2_exact(a, a);
  CHECK(same.w2 == 0.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same.assignment[i] == static_cast<int>(i));

  Eigen::MatrixXd p(1, 2), q(1, 2);
  p << 0, 0;
  q << 3, 4;
  CHECK(w2_exact(p, q).w2 == doctest::Approx(5.0));

  Eigen::MatrixXd wrong(2, 2);
  wrong.setZero();
  CHECK_THROWS_AS(w2_exact(a, wrong), std::domain_error);
}

TEST_CASE("solver beats random feasible assignments and matches 1d sorting") {
  const int n = 512;
  Eigen::MatrixXd a(n, 1), b(n, 1);
  CounterRng rng(7, StreamPurpose::Generic, 1);
  for (int i = 0; i < n; ++i) {
    a(i, 0) = rng.normal(2 * i);
    b(i, 0) = 0.3 + 1.4 * rng.normal(2 * i + 1);
  }
  const auto plan = w2_exact(a, b);
  const double sorted = w2_1d(std::vector<double>(a.data(), a.data() + n),
                              std::vector<double>(b.data(), b.data() + n));
  CHECK(plan.w2 == doctest::Approx(sorted).epsilon(1e-10));

  // never beaten by random permutations
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng shuffle_rng(8, StreamPurpose::Generic, 2);
  std::uint64_t idx = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.uniform(idx++) * (i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    double cost = 0;
    for (int i = 0; i < n; ++i) cost += (a.row(i) - b.row(perm[i])).squaredNorm();
    CHECK(plan.cost <= cost + 1e-9);
  }
}

TEST_CASE("translation between gaussian clouds") {
  const int n = 2048, d = 2;
  Eigen::MatrixXd a = standard_normal_matrix(n, d, 42, StreamPurpose::Generic);
  Eigen::MatrixXd b = standard_normal_matrix(n, d, 43, StreamPurpose::Generic);
  b.col(0).array() += 1.0;
  CHECK(w2_exact(a, b).w2 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("same-law batches concentrate under the sampling floor") {
  const int n = 2048, d = 2;
  const Eigen::MatrixXd a = standard_normal_matrix(n, d, 101, StreamPurpose::Generic);
  const Eigen::MatrixXd b = standard_normal_matrix(n, d, 202, StreamPurpose::Generic);
  CHECK(w2_exact(a, b).w2 <= mc_floor(static_cast<double>(d), n, 2.0) * 3.0);
}

TEST_CASE("gaussian closed form") {
  const int d = 3;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
  CHECK(w2_gaussian_closed_form(zero, ident(d), zero, ident(d)) == doctest::Approx(0.0));
  CHECK(w2_gaussian_closed_form(zero, ident(d), zero, 4.0 * ident(d)) ==
        doctest::Approx(std::sqrt(3.0)));
  Eigen::VectorXd shift(2);
  shift << 3, 4;
  CHECK(w2_gaussian_closed_form(Eigen::VectorXd::Zero(2), ident(2), shift, ident(2)) ==
        doctest::Approx(5.0));
  Eigen::MatrixXd indefinite = Eigen::Vector2d(1.0, -1.0).asDiagonal();
  CHECK_THROWS_AS(
      w2_gaussian_closed_form(Eigen::VectorXd::Zero(2), indefinite, shift, ident(2)),
      std::domain_error);
}

TEST_CASE("closed form agrees with the exact solver on gaussian samples") {
  const int n = 1024, d = 2;
  Eigen::MatrixXd a = standard_normal_matrix(n, d, 5, StreamPurpose::Generic);
  Eigen::MatrixXd b = standard_normal_matrix(n, d, 6, StreamPurpose::Generic);
  b *= 2.0;
  b.col(0).array() += 2.0;
  const double exact = w2_exact(a, b).w2;
  Eigen::VectorXd m2(2);
  m2 << 2.0, 0.0;
  const double closed = w2_gaussian_closed_form(Eigen::VectorXd::Zero(2), ident(2), m2,
                                                4.0 * ident(2));
  CHECK(std::abs(exact - closed) / closed < 0.08);
}

TEST_CASE("sliced distance: degenerate, 1d equivalence, shift cross-check") {
  const int n = 1024;
  Eigen::MatrixXd a1 = standard_normal_matrix(n, 1, 9, StreamPurpose::Generic);
  Eigen::MatrixXd b1 = standard_normal_matrix(n, 1, 10, StreamPurpose::Generic);
  b1.array() += 0.7;
  CHECK(sliced_w2(a1, a1, 32, 3).value == doctest::Approx(0.0));
  const auto s1 = sliced_w2(a1, b1, 32, 3);
  CHECK(s1.value == doctest::Approx(w2_exact(a1, b1).w2).epsilon(1e-10));

  const int d = 8;
  Eigen::MatrixXd a = standard_normal_matrix(2048, d, 11, StreamPurpose::Generic);
  Eigen::MatrixXd b = standard_normal_matrix(2048, d, 12, StreamPurpose::Generic);
  const double shift = 2.5;
  b.col(0).array() += shift;
  const auto sliced = sliced_w2(a, b, 256, 4);
  // mean |u . e| for a random unit direction in R^8
  const double direction_factor = 0.2910428;  // Gamma(4)/(sqrt(pi) Gamma(4.5))
  CHECK(std::abs(sliced.value - shift * direction_factor) <=
        3.0 * sliced.std_err + 0.1);
  const double exact = w2_exact(a, b).w2;
  CHECK(sliced.value <= exact + 3.0 * sliced.std_err);
  CHECK_THROWS_AS(sliced_w2(a, b, 8, 4), ConfigError);
}

TEST_CASE("exact solver cap defers to the sliced variant") {
  Eigen::MatrixXd big(kExactAssignmentCap + 1, 1);
  big.setZero();
  CHECK_THROWS_AS(w2_exact(big, big), ConfigError);
}

TEST_CASE("regularity audit: invariant field passes with full margins") {
  auto target = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(2), ident(2), ident(2));
  VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
  const CoefficientSet cs = compute_base_constants(*target);
  AuditProbeSpec spec = default_audit_probe();
  spec.points = 16;
  const AuditReport report = regularity_audit(field, cs, spec, uniform_schedule(64, 0.0));
  CHECK(report.pass);
  for (const auto& row : report.rows) CHECK(row.margin == doctest::Approx(row.rhs));
  CHECK(report.budget_lhs == doctest::Approx(0.0));
}

TEST_CASE("regularity audit: wide scalar gaussian rows pass") {
  auto target = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(1),
                                                 4.0 * ident(1), ident(1));
  VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
  const CoefficientSet cs = compute_base_constants(*target);
  AuditProbeSpec spec = default_audit_probe();
  spec.points = 32;
  const AuditReport report = regularity_audit(field, cs, spec, uniform_schedule(64, 0.0));
  CHECK(report.pass);
  const std::string csv = report.to_csv();
  CHECK(csv.find("check,t,x_norm,lhs,rhs,margin,pass") == 0);
}

TEST_CASE("regularity audit: halved k5 fails the narrow-envelope control") {
  // envelope narrower than the reference: the time-derivative envelope is
  // within a factor two of tight near the terminal time
  auto target = std::make_shared<GaussianTarget>(Eigen::VectorXd::Zero(1),
                                                 0.25 * ident(1), ident(1));
  VelocityField field(target, FlowKind::Follmer, EvalMode::ClosedForm);
  CoefficientSet cs = compute_base_constants(*target);
  AuditProbeSpec spec = default_audit_probe();
  spec.points = 32;
  const Schedule schedule = uniform_schedule(64, 0.0);
  CHECK(regularity_audit(field, cs, spec, schedule).pass);
  cs.k5 *= 0.5;
  const AuditReport bad = regularity_audit(field, cs, spec, schedule);
  CHECK_FALSE(bad.pass);
  bool dt_failed_late = false;
  for (const auto& row : bad.rows)
    if (!row.pass && row.check == "time_derivative" && row.t >= 0.9) dt_failed_late = true;
  CHECK(dt_failed_late);
}
