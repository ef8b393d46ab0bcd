// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace deepkd {

using Vec64 = std::vector<double>;

// Dense row-major matrix of doubles. data.size() == rows * cols always.
struct Mat64 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec64 data;

  Mat64() = default;
  Mat64(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

// Deterministic 64-bit generator: xoshiro256++ state seeded with splitmix64.
// The integer stream is the cross-platform reproducibility contract; doubles
// and normals are derived from it with fixed arithmetic (see README).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t next_below(std::uint64_t bound);
  // Uniform double in [0, 1) with 53-bit resolution.
  double next_unit();
  // Standard normal via the Marsaglia polar method (no trig functions).
  double next_normal();

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Numerically stable softmax: shifts by the max before exponentiating.
// Output entries are strictly positive and sum to 1 within 1e-12.
Vec64 softmax(std::span<const double> z);

// log(sum_i exp(z_i)) computed as max + log(sum exp(z - max)).
// Satisfies max(z) <= result <= max(z) + log(n); finite for finite input.
double log_sum_exp(std::span<const double> z);

// m * x for x of length m.cols.
Vec64 matvec(const Mat64& m, std::span<const double> x);

// n independent draws from N(0, stddev^2).
Vec64 rand_normal(Rng& rng, std::size_t n, double stddev);

// In-place Fisher-Yates shuffle driven by rng.
void shuffle(Rng& rng, std::vector<std::size_t>& values);

}  // namespace deepkd
