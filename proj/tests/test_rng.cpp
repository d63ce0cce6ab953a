#include <doctest.h>

#include "flowlab/rng.hpp"

using namespace flowlab;

TEST_CASE("counter rng is a pure function of its address") {
  CounterRng a(42, StreamPurpose::InitialDraw, 7);
  CounterRng b(42, StreamPurpose::InitialDraw, 7);
  for (std::uint64_t i = 0; i < 32; ++i) {
    CHECK(a.normal(i) == b.normal(i));
    CHECK(a.uniform(i) == b.uniform(i));
  }
  // order independence
  CHECK(a.normal(17) == b.normal(17));
  CHECK(a.normal(3) == b.normal(3));
}

TEST_CASE("distinct streams and purposes decorrelate") {
  CounterRng a(42, StreamPurpose::InitialDraw, 7);
  CounterRng b(42, StreamPurpose::InitialDraw, 8);
  CounterRng c(42, StreamPurpose::TargetOracle, 7);
  CounterRng d(43, StreamPurpose::InitialDraw, 7);
  int same_ab = 0, same_ac = 0, same_ad = 0;
  for (std::uint64_t i = 0; i < 64; ++i) {
    same_ab += a.uniform(i) == b.uniform(i);
    same_ac += a.uniform(i) == c.uniform(i);
    same_ad += a.uniform(i) == d.uniform(i);
  }
  CHECK(same_ab == 0);
  CHECK(same_ac == 0);
  CHECK(same_ad == 0);
}

TEST_CASE("uniforms live in [0,1) and normals have the right moments") {
  CounterRng rng(123, StreamPurpose::Generic, 0);
  const int n = 200000;
  double mean = 0, var = 0, umin = 1, umax = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(static_cast<std::uint64_t>(i));
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    const double z = rng.normal(static_cast<std::uint64_t>(i) + n);
    mean += z;
    var += z * z;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(umin >= 0.0);
  CHECK(umax < 1.0);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("batch normals reproduce row streams") {
  const Eigen::MatrixXd m = standard_normal_matrix(8, 3, 99, StreamPurpose::InitialDraw);
  CounterRng row5(99, StreamPurpose::InitialDraw, 5);
  for (int j = 0; j < 3; ++j) CHECK(m(5, j) == row5.normal(static_cast<std::uint64_t>(j)));
}

TEST_CASE("halton points are deterministic and in the unit cube") {
  const Eigen::MatrixXd a = halton_points(64, 3);
  const Eigen::MatrixXd b = halton_points(64, 3);
  CHECK((a - b).norm() == 0.0);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() < 1.0);
  // base-2 first column starts 1/2, 1/4, 3/4
  CHECK(a(0, 0) == doctest::Approx(0.5));
  CHECK(a(1, 0) == doctest::Approx(0.25));
  CHECK(a(2, 0) == doctest::Approx(0.75));
}

TEST_CASE("probe ball stays inside the ball, first row is the origin") {
  const double radius = 3.5;
  const Eigen::MatrixXd p = probe_ball(255, 4, radius);
  CHECK(p.rows() == 256);
  CHECK(p.row(0).norm() == 0.0);
  for (int i = 0; i < p.rows(); ++i) CHECK(p.row(i).norm() <= radius + 1e-12);
  double max_r = 0;
  for (int i = 0; i < p.rows(); ++i) max_r = std::max(max_r, p.row(i).norm());
  CHECK(max_r > 0.8 * radius);
}
