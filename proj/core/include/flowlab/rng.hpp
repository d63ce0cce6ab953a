#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <cmath>

#include <Eigen/Core>

namespace flowlab {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011). Every draw
// is addressed by (key, counter), so parallel consumers never share state and
// results are independent of evaluation order and worker count.
namespace philox {

inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

inline std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kM4x32A, ctr[0], lo0, hi0);
    mulhilo(kM4x32B, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW32A;
    key[1] += kW32B;
  }
  return ctr;
}

}  // namespace philox

// Disjoint counter sub-spaces for the independent random consumers.
enum class StreamPurpose : std::uint32_t {
  InitialDraw = 1,
  TargetOracle = 2,
  Quadrature = 3,
  Perturbation = 4,
  Probe = 5,
  Projection = 6,
  Generic = 7,
};

// FNV-1a, used to derive stream ids from evaluation coordinates.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_point(double t, const Eigen::VectorXd& x) {
  std::uint64_t h = fnv1a64(&t, sizeof(t));
  return fnv1a64(x.data(), static_cast<std::size_t>(x.size()) * sizeof(double), h);
}

// A read-only random stream: the i-th variate of stream (seed, purpose, id) is
// a pure function of its address.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, StreamPurpose purpose, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        hi_{static_cast<std::uint32_t>(stream_id),
            static_cast<std::uint32_t>(stream_id >> 32) ^ static_cast<std::uint32_t>(purpose) * 0x9E3779B9u} {}

  // Two uniform doubles in [2^-54, 1) per block.
  double uniform(std::uint64_t i) const {
    const auto b = philox::block(counter(i >> 1), key_);
    return to_unit(b, static_cast<int>(i & 1));
  }

  // Standard normals via Box-Muller on the two uniforms of block i>>1.
  double normal(std::uint64_t i) const {
    const auto b = philox::block(counter(i >> 1), key_);
    const double u1 = to_unit(b, 0);
    const double u2 = to_unit(b, 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    return (i & 1) ? r * std::sin(theta) : r * std::cos(theta);
  }

  void fill_normal(Eigen::Ref<Eigen::VectorXd> out, std::uint64_t start = 0) const {
    for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = normal(start + static_cast<std::uint64_t>(j));
  }

 private:
  std::array<std::uint32_t, 4> counter(std::uint64_t block_index) const {
    return {static_cast<std::uint32_t>(block_index), static_cast<std::uint32_t>(block_index >> 32),
            hi_[0], hi_[1]};
  }

  static double to_unit(const std::array<std::uint32_t, 4>& b, int half) {
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(b[2 * half + 1]) << 32) | b[2 * half];
    // 53-bit mantissa, offset by half an ulp so 0 is excluded (log-safe).
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> hi_;
};

// n x d matrix of standard normals; row i comes from stream (seed, purpose, i).
inline Eigen::MatrixXd standard_normal_matrix(int n, int d, std::uint64_t seed,
                                              StreamPurpose purpose) {
  Eigen::MatrixXd z(n, d);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, purpose, static_cast<std::uint64_t>(i));
    for (int j = 0; j < d; ++j) z(i, j) = rng.normal(static_cast<std::uint64_t>(j));
  }
  return z;
}

// Halton low-discrepancy sequence in [0,1)^d (bases = first d primes).
Eigen::MatrixXd halton_points(int n, int d);

// Halton probe cloud inside the ball of the given radius, first row = origin.
Eigen::MatrixXd probe_ball(int n, int d, double radius);

}  // namespace flowlab
